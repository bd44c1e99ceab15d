use thiserror::Error;

/// Errors produced by the game engine, solvers, datasets and learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown game `{0}` (supported: rps, rps_asym, kuhn, large_kuhn, leduc, oshi_zumo)")]
    UnknownGame(String),

    #[error("invalid game parameters: {0}")]
    InvalidParams(String),

    #[error("operation requires a non-terminal state")]
    TerminalState,

    #[error("illegal action {action} at `{key}`")]
    IllegalAction { key: String, action: usize },

    #[error("infostate `{0}` is missing from the policy")]
    MissingInfostate(String),

    #[error("invalid distribution at `{key}`: {reason}")]
    InvalidPolicy { key: String, reason: String },

    #[error("infostate `{0}` does not belong to this game")]
    UnknownInfostate(String),

    #[error("inconsistent game tree: {0}")]
    InconsistentTree(String),

    #[error("trajectory {index} is invalid: {reason}")]
    InvalidTrajectory { index: usize, reason: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dataset is for game `{found}` but `{expected}` was requested")]
    GameMismatch { expected: String, found: String },

    #[error("empirical behavior probability is zero for observed action {action} at `{key}`")]
    ZeroBehaviorProbability { key: String, action: usize },

    #[error("degenerate dataset: total importance weight is zero")]
    DegenerateDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("iteration {iteration}, player {player}: {source}")]
    Iteration {
        iteration: usize,
        player: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
