//! `offsp`: dataset recipes, Off-FSP runs and exact evaluation.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use offsp_core::make_game;

use crate::config::{invalid, load_experiment, Invalid};

#[derive(Parser)]
#[command(name = "offsp", version, about = "Offline fictitious self-play experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write fictitious-play checkpoints usable as experts and populations.
    GenExpert {
        #[arg(long)]
        game: String,
        /// Game parameters as JSON, e.g. '{"coins": 8}'.
        #[arg(long)]
        params: Option<String>,
        /// Number of checkpoints; checkpoint k holds the average after k - 1 iterations.
        #[arg(long)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize a dataset recipe to a file, with a coverage report.
    Sample {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Dataset file to write; coverage goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Off-FSP (and requested baselines) for every seed of an experiment.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long)]
        algorithm: Option<String>,
        /// Number of seeds.
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated baselines (bc, qlearning, cql, bcq, crr).
        #[arg(long, value_delimiter = ',')]
        baselines: Option<Vec<String>>,
        /// Worker processes for multi-seed runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Exact NashConv of a policy, store or collection file, or of a dataset's behavior policy.
    Eval {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        dataset: Option<PathBuf>,
        /// Expected game; mismatches are rejected.
        #[arg(long)]
        game: Option<String>,
        /// Also write the metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset statistics and coverage.
    Inspect {
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Options shared by commands that take an experiment config.
#[derive(Args)]
struct ExperimentArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set learner.cql_alpha=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    game: Option<String>,
    /// d1 | d1-exact | d2 | mix:<ratio> | population:<k> | file:<path>
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    expert_dir: Option<PathBuf>,
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl ExperimentArgs {
    /// Config overrides in precedence order: `--set` first, then dedicated flags.
    fn overrides(&self, extra: Vec<String>) -> Vec<String> {
        let mut out = self.set.clone();
        if let Some(g) = &self.game {
            out.push(format!("game={}", quote(g)));
        }
        if let Some(d) = &self.dataset {
            out.push(format!("dataset={}", quote(d)));
        }
        if let Some(n) = self.n {
            out.push(format!("n_trajectories={n}"));
        }
        if let Some(s) = self.seed {
            out.push(format!("seed={s}"));
        }
        if let Some(p) = &self.expert_dir {
            out.push(format!("expert_dir={}", quote(&p.to_string_lossy())));
        }
        out.extend(extra);
        out
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::GenExpert { game, params, iterations, out } => {
            let params = match params {
                Some(p) => serde_json::from_str(&p).map_err(|e| invalid!("--params: {e}"))?,
                None => serde_json::Value::Null,
            };
            let spec = make_game(&game, &params).map_err(|e| invalid!("{e}"))?;
            commands::gen_expert(&spec, iterations, &out)
        }
        Cmd::Sample { exp, out } => {
            let e = load_experiment(exp.config.as_deref(), &exp.overrides(vec![]))?;
            commands::sample(&e, &out)
        }
        Cmd::Run { exp, out, iterations, eval_every, algorithm, runs, baselines, jobs } => {
            if jobs == 0 {
                return Err(invalid!("--jobs must be at least 1"));
            }
            let mut extra = Vec::new();
            if let Some(o) = out {
                extra.push(format!("output={}", quote(&o.to_string_lossy())));
            }
            if let Some(k) = iterations {
                extra.push(format!("iterations={k}"));
            }
            if let Some(k) = eval_every {
                extra.push(format!("eval_every={k}"));
            }
            if let Some(a) = algorithm {
                extra.push(format!("learner.algorithm={}", quote(&a)));
            }
            if let Some(r) = runs {
                extra.push(format!("runs={r}"));
            }
            if let Some(b) = baselines {
                let list: Vec<String> = b.iter().map(|s| quote(s)).collect();
                extra.push(format!("baselines=[{}]", list.join(", ")));
            }
            let e = load_experiment(exp.config.as_deref(), &exp.overrides(extra))?;
            commands::run(&e, jobs)
        }
        Cmd::Eval { file, dataset, game, out } => {
            commands::eval(file.as_deref(), dataset.as_deref(), game.as_deref(), out.as_deref())
        }
        Cmd::Inspect { dataset, out } => commands::inspect(&dataset, out.as_deref()),
    }
}

/// Input errors from the core library that map to exit code 1.
fn is_input_error(e: &offsp_core::Error) -> bool {
    use offsp_core::Error::*;
    matches!(
        e,
        UnknownGame(_)
            | InvalidParams(_)
            | IllegalAction { .. }
            | MissingInfostate(_)
            | InvalidPolicy { .. }
            | UnknownInfostate(_)
            | InvalidTrajectory { .. }
            | Parse { .. }
            | GameMismatch { .. }
            | Config(_)
            | Json(_)
    )
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let input = err.chain().any(|c| {
        c.downcast_ref::<Invalid>().is_some() || c.downcast_ref::<offsp_core::Error>().is_some_and(is_input_error)
    });
    if input {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
