//! Extensive-form game rules.
//!
//! Every game is a pure function of its action history: a [`GameState`] is the
//! history (decision actions and chance outcomes, each an index into the legal
//! list at that point) plus the cached node classification. Simultaneous-move
//! games are sequentialized: player 0 moves first and player 1 moves without
//! observing that move.
//!
//! Infostate keys have the form `"<player>|<observation>"` so the owner is
//! recoverable from the key alone.

mod kuhn;
mod large_kuhn;
mod leduc;
mod oshi_zumo;
mod rps;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use large_kuhn::LargeKuhnParams;
pub use oshi_zumo::OshiZumoParams;

/// Index into the legal action list of the node where the action is taken.
pub type Action = usize;

/// One of the two decision-making seats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Player {
    Zero,
    One,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::Zero, Player::One];

    pub fn index(self) -> usize {
        match self {
            Player::Zero => 0,
            Player::One => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Player> {
        match index {
            0 => Some(Player::Zero),
            1 => Some(Player::One),
            _ => None,
        }
    }

    pub fn opponent(self) -> Player {
        match self {
            Player::Zero => Player::One,
            Player::One => Player::Zero,
        }
    }
}

impl From<Player> for u8 {
    fn from(p: Player) -> u8 {
        p.index() as u8
    }
}

impl TryFrom<u8> for Player {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        Player::from_index(v as usize).ok_or_else(|| format!("player index {v} out of range"))
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// Whoever moves at a non-terminal node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Player(Player),
    Chance,
}

/// Canonical encoding of one player's information state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoKey(pub String);

impl InfoKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Owner parsed from the `"<player>|"` prefix.
    pub fn owner(&self) -> Option<Player> {
        let (p, _) = self.0.split_once('|')?;
        Player::from_index(p.parse().ok()?)
    }
}

impl fmt::Display for InfoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Classification of a history.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    /// Outcome probabilities, indexed by outcome id.
    Chance(Vec<f64>),
    Decision { player: Player, num_actions: usize },
    Terminal([f64; 2]),
}

/// A game and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", content = "params", rename_all = "snake_case")]
pub enum GameSpec {
    Rps,
    RpsAsym,
    Kuhn,
    LargeKuhn(LargeKuhnParams),
    Leduc,
    OshiZumo(OshiZumoParams),
}

pub const GAME_NAMES: [&str; 6] = ["rps", "rps_asym", "kuhn", "large_kuhn", "leduc", "oshi_zumo"];

/// Builds a game by name. `params` may be `null` or a partial object; missing
/// fields take the defaults.
pub fn make_game(name: &str, params: &serde_json::Value) -> Result<GameSpec> {
    let no_params = params.is_null() || params.as_object().is_some_and(|m| m.is_empty());
    let reject_params = |game: GameSpec| {
        if no_params {
            Ok(game)
        } else {
            Err(Error::InvalidParams(format!("`{name}` takes no parameters")))
        }
    };
    let parse = |v: &serde_json::Value| -> Result<serde_json::Value> {
        Ok(if v.is_null() { serde_json::json!({}) } else { v.clone() })
    };
    match name {
        "rps" => reject_params(GameSpec::Rps),
        "rps_asym" => reject_params(GameSpec::RpsAsym),
        "kuhn" => reject_params(GameSpec::Kuhn),
        "leduc" => reject_params(GameSpec::Leduc),
        "large_kuhn" => {
            let p: LargeKuhnParams = serde_json::from_value(parse(params)?)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            p.validate()?;
            Ok(GameSpec::LargeKuhn(p))
        }
        "oshi_zumo" => {
            let p: OshiZumoParams = serde_json::from_value(parse(params)?)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            p.validate()?;
            Ok(GameSpec::OshiZumo(p))
        }
        other => Err(Error::UnknownGame(other.to_string())),
    }
}

/// A history together with its cached classification.
#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    history: Vec<u8>,
    node: NodeKind,
}

impl GameState {
    pub fn history(&self) -> &[u8] {
        &self.history
    }

    pub fn node(&self) -> &NodeKind {
        &self.node
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.node, NodeKind::Terminal(_))
    }

    pub fn returns(&self) -> Option<[f64; 2]> {
        match self.node {
            NodeKind::Terminal(r) => Some(r),
            _ => None,
        }
    }
}

impl GameSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GameSpec::Rps => "rps",
            GameSpec::RpsAsym => "rps_asym",
            GameSpec::Kuhn => "kuhn",
            GameSpec::LargeKuhn(_) => "large_kuhn",
            GameSpec::Leduc => "leduc",
            GameSpec::OshiZumo(_) => "oshi_zumo",
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match self {
            GameSpec::LargeKuhn(p) => serde_json::to_value(p).expect("params serialize"),
            GameSpec::OshiZumo(p) => serde_json::to_value(p).expect("params serialize"),
            _ => serde_json::Value::Null,
        }
    }

    fn node_at(&self, h: &[u8]) -> NodeKind {
        match self {
            GameSpec::Rps => rps::node(false, h),
            GameSpec::RpsAsym => rps::node(true, h),
            GameSpec::Kuhn => kuhn::node(h),
            GameSpec::LargeKuhn(p) => large_kuhn::node(p, h),
            GameSpec::Leduc => leduc::node(h),
            GameSpec::OshiZumo(p) => oshi_zumo::node(p, h),
        }
    }

    pub fn initial_state(&self) -> GameState {
        GameState { history: Vec::new(), node: self.node_at(&[]) }
    }

    /// Rebuilds a state from a raw history, validating every step.
    pub fn state_from_history(&self, history: &[u8]) -> Result<GameState> {
        let mut state = self.initial_state();
        for &a in history {
            state = self.apply(&state, a as Action)?;
        }
        Ok(state)
    }

    pub fn current_player(&self, state: &GameState) -> Result<Actor> {
        match state.node {
            NodeKind::Chance(_) => Ok(Actor::Chance),
            NodeKind::Decision { player, .. } => Ok(Actor::Player(player)),
            NodeKind::Terminal(_) => Err(Error::TerminalState),
        }
    }

    pub fn num_actions(&self, state: &GameState) -> Result<usize> {
        match &state.node {
            NodeKind::Chance(p) => Ok(p.len()),
            NodeKind::Decision { num_actions, .. } => Ok(*num_actions),
            NodeKind::Terminal(_) => Err(Error::TerminalState),
        }
    }

    pub fn legal_actions(&self, state: &GameState) -> Result<Vec<Action>> {
        Ok((0..self.num_actions(state)?).collect())
    }

    /// Human-readable names of the legal actions, in action-id order.
    pub fn action_labels(&self, state: &GameState) -> Result<Vec<String>> {
        if state.is_terminal() {
            return Err(Error::TerminalState);
        }
        let h = &state.history;
        Ok(match self {
            GameSpec::Rps => rps::labels(false, h),
            GameSpec::RpsAsym => rps::labels(true, h),
            GameSpec::Kuhn => kuhn::labels(h),
            GameSpec::LargeKuhn(p) => large_kuhn::labels(p, h),
            GameSpec::Leduc => leduc::labels(h),
            GameSpec::OshiZumo(p) => oshi_zumo::labels(p, h),
        })
    }

    /// Action id of the legal action with the given label.
    pub fn action_by_label(&self, state: &GameState, label: &str) -> Result<Action> {
        self.action_labels(state)?
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::IllegalAction { key: self.describe(state), action: usize::MAX })
    }

    /// Chance outcome probabilities at a chance node.
    pub fn chance_outcomes(&self, state: &GameState) -> Result<Vec<(Action, f64)>> {
        match &state.node {
            NodeKind::Chance(p) => Ok(p.iter().copied().enumerate().collect()),
            NodeKind::Decision { .. } => Ok(Vec::new()),
            NodeKind::Terminal(_) => Err(Error::TerminalState),
        }
    }

    pub fn apply(&self, state: &GameState, action: Action) -> Result<GameState> {
        let n = self.num_actions(state)?;
        if action >= n {
            return Err(Error::IllegalAction { key: self.describe(state), action });
        }
        let mut history = Vec::with_capacity(state.history.len() + 1);
        history.extend_from_slice(&state.history);
        history.push(action as u8);
        let node = self.node_at(&history);
        Ok(GameState { history, node })
    }

    /// Key of `player`'s information state at `state`.
    pub fn infostate_key(&self, state: &GameState, player: Player) -> InfoKey {
        let h = &state.history;
        let obs = match self {
            GameSpec::Rps | GameSpec::RpsAsym => rps::observation(h, player),
            GameSpec::Kuhn => kuhn::observation(h, player),
            GameSpec::LargeKuhn(p) => large_kuhn::observation(p, h, player),
            GameSpec::Leduc => leduc::observation(h, player),
            GameSpec::OshiZumo(p) => oshi_zumo::observation(p, h, player),
        };
        InfoKey(format!("{}|{}", player.index(), obs))
    }

    /// Infostate key of the acting player, or a chance/terminal marker.
    fn describe(&self, state: &GameState) -> String {
        match state.node {
            NodeKind::Decision { player, .. } => self.infostate_key(state, player).0,
            NodeKind::Chance(_) => format!("chance@{:?}", state.history),
            NodeKind::Terminal(_) => format!("terminal@{:?}", state.history),
        }
    }
}

/// Uniform distribution over `n` outcomes.
pub(crate) fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Cards from `deck` not in `dealt`, in ascending order.
pub(crate) fn remaining(deck: usize, dealt: &[usize]) -> Vec<usize> {
    (0..deck).filter(|c| !dealt.contains(c)).collect()
}
