//! Oshi-Zumo: both players secretly bid coins each round; the higher bid
//! pushes the token one cell towards the opponent. Bids are paid whether or
//! not they win. The board has cells `0..=2*size` with the token starting
//! at `size`; the game ends when the token reaches an edge cell, after
//! `horizon` rounds, or when both players are out of coins. Player 0 wins
//! if the token ends on player 1's half (`pos > size`).
//!
//! Rounds are sequentialized: player 0 bids, then player 1 bids without
//! seeing it. Action id = bid amount, legal bids `0..=coins`.

use serde::{Deserialize, Serialize};

use super::{NodeKind, Player};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OshiZumoParams {
    pub coins: u32,
    pub size: u32,
    pub horizon: u32,
}

impl Default for OshiZumoParams {
    fn default() -> Self {
        OshiZumoParams { coins: 4, size: 3, horizon: 6 }
    }
}

impl OshiZumoParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.size == 0 || self.horizon == 0 {
            return Err(Error::InvalidParams("size and horizon must be positive".into()));
        }
        if self.coins > 12 {
            return Err(Error::InvalidParams("coins must be at most 12".into()));
        }
        Ok(())
    }
}

struct Board {
    coins: [u32; 2],
    pos: i64,
    rounds: u32,
}

impl Board {
    fn over(&self, p: &OshiZumoParams) -> bool {
        self.pos <= 0
            || self.pos >= 2 * p.size as i64
            || self.rounds >= p.horizon
            || self.coins == [0, 0]
    }
}

fn replay(p: &OshiZumoParams, h: &[u8]) -> Board {
    let mut b = Board { coins: [p.coins; 2], pos: p.size as i64, rounds: 0 };
    for pair in h.chunks_exact(2) {
        let (b0, b1) = (pair[0] as u32, pair[1] as u32);
        b.coins[0] -= b0;
        b.coins[1] -= b1;
        b.pos += match b0.cmp(&b1) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
        };
        b.rounds += 1;
    }
    b
}

pub(super) fn node(p: &OshiZumoParams, h: &[u8]) -> NodeKind {
    let b = replay(p, h);
    let player = if h.len().is_multiple_of(2) { Player::Zero } else { Player::One };
    if player == Player::Zero && b.over(p) {
        let r = match b.pos.cmp(&(p.size as i64)) {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Less => -1.0,
            std::cmp::Ordering::Equal => 0.0,
        };
        return NodeKind::Terminal([r, -r]);
    }
    NodeKind::Decision { player, num_actions: b.coins[player.index()] as usize + 1 }
}

pub(super) fn labels(p: &OshiZumoParams, h: &[u8]) -> Vec<String> {
    match node(p, h) {
        NodeKind::Decision { num_actions, .. } => (0..num_actions).map(|b| b.to_string()).collect(),
        _ => Vec::new(),
    }
}

/// Completed rounds are public; the pending bid of player 0 is hidden.
pub(super) fn observation(_p: &OshiZumoParams, h: &[u8], _player: Player) -> String {
    h.chunks_exact(2)
        .map(|r| format!("{}-{}", r[0], r[1]))
        .collect::<Vec<_>>()
        .join(",")
}
