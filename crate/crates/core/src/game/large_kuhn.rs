//! Kuhn poker with a deeper betting tree: each player starts with
//! `initial_pot` chips in the pot and may raise by `raise_size` chips, but
//! only during the first `raise_window` decisions of the hand.
//!
//! Chance deals as in Kuhn poker. Decision labels: Fold, Check, Call, Raise.
//! Legal lists (action id = position): with no outstanding bet
//! `[Check, Raise]`; facing a bet `[Fold, Call, Raise]`; `Raise` is dropped
//! once the raise window is exhausted.

use serde::{Deserialize, Serialize};

use super::{remaining, uniform, NodeKind, Player};
use crate::error::{Error, Result};

const CARDS: [&str; 3] = ["J", "Q", "K"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeKuhnParams {
    pub initial_pot: u32,
    pub raise_size: u32,
    pub raise_window: u32,
}

impl Default for LargeKuhnParams {
    fn default() -> Self {
        LargeKuhnParams { initial_pot: 5, raise_size: 1, raise_window: 8 }
    }
}

impl LargeKuhnParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.initial_pot == 0 || self.raise_size == 0 {
            return Err(Error::InvalidParams("initial_pot and raise_size must be positive".into()));
        }
        if self.raise_window > 32 {
            return Err(Error::InvalidParams("raise_window must be at most 32".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Move {
    Fold,
    Check,
    Call,
    Raise,
}

fn legal(p: &LargeKuhnParams, step: usize, facing: bool) -> Vec<Move> {
    let mut moves = if facing { vec![Move::Fold, Move::Call] } else { vec![Move::Check] };
    if step < p.raise_window as usize {
        moves.push(Move::Raise);
    }
    moves
}

enum Betting {
    ToAct { player: Player, step: usize, facing: bool },
    Done([f64; 2]),
}

/// Replays the betting actions after the deal.
fn replay(p: &LargeKuhnParams, cards: [usize; 2], acts: &[u8]) -> Betting {
    let mut contrib = [p.initial_pot as f64; 2];
    let mut facing = false;
    let mut player = Player::Zero;
    let showdown = |contrib: [f64; 2]| {
        let stake = contrib[0].min(contrib[1]);
        let r = if cards[0] > cards[1] { stake } else { -stake };
        Betting::Done([r, -r])
    };
    for (step, &a) in acts.iter().enumerate() {
        let me = player.index();
        match legal(p, step, facing)[a as usize] {
            Move::Fold => {
                let loss = contrib[me];
                let mut r = [loss; 2];
                r[me] = -loss;
                return Betting::Done(r);
            }
            Move::Call => {
                contrib[me] = contrib[1 - me];
                return showdown(contrib);
            }
            Move::Check => {
                if step > 0 {
                    return showdown(contrib);
                }
            }
            Move::Raise => {
                contrib[me] = contrib[1 - me] + p.raise_size as f64;
                facing = true;
            }
        }
        player = player.opponent();
    }
    Betting::ToAct { player, step: acts.len(), facing }
}

fn deal(h: &[u8]) -> [usize; 2] {
    let c0 = h[0] as usize;
    [c0, remaining(3, &[c0])[h[1] as usize]]
}

pub(super) fn node(p: &LargeKuhnParams, h: &[u8]) -> NodeKind {
    match h.len() {
        0 => NodeKind::Chance(uniform(3)),
        1 => NodeKind::Chance(uniform(2)),
        _ => match replay(p, deal(h), &h[2..]) {
            Betting::Done(r) => NodeKind::Terminal(r),
            Betting::ToAct { player, step, facing } => {
                NodeKind::Decision { player, num_actions: legal(p, step, facing).len() }
            }
        },
    }
}

pub(super) fn labels(p: &LargeKuhnParams, h: &[u8]) -> Vec<String> {
    match h.len() {
        0 => CARDS.iter().map(|s| s.to_string()).collect(),
        1 => remaining(3, &[h[0] as usize]).iter().map(|&c| CARDS[c].to_string()).collect(),
        _ => match replay(p, deal(h), &h[2..]) {
            Betting::ToAct { step, facing, .. } => {
                legal(p, step, facing).iter().map(|m| format!("{m:?}")).collect()
            }
            Betting::Done(_) => Vec::new(),
        },
    }
}

pub(super) fn observation(_p: &LargeKuhnParams, h: &[u8], player: Player) -> String {
    if h.len() <= player.index() {
        return String::new();
    }
    let card = if player == Player::Zero { h[0] as usize } else { deal(h)[1] };
    // Only checks and raises can precede a decision.
    let mut betting = String::new();
    let mut facing = false;
    for &a in h.iter().skip(2) {
        let raised = if facing { a == 2 } else { a == 1 };
        betting.push(if raised { 'r' } else { 'x' });
        facing = raised;
    }
    format!("{}|{}", CARDS[card], betting)
}
