//! Rock-Paper-Scissors and the asymmetric variant where player 1 also has
//! `Rock2`, which pays exactly like `Rock`.
//!
//! Action ids: 0 Rock, 1 Paper, 2 Scissors, 3 Rock2 (player 1, asymmetric only).

use super::{NodeKind, Player};

const LABELS: [&str; 4] = ["Rock", "Paper", "Scissors", "Rock2"];

fn num_actions(asym: bool, player: Player) -> usize {
    if asym && player == Player::One {
        4
    } else {
        3
    }
}

/// Payoff to the first mover.
fn payoff(a: u8, b: u8) -> f64 {
    // Rock2 behaves as Rock.
    let b = if b == 3 { 0 } else { b };
    match (a + 3 - b) % 3 {
        0 => 0.0,
        1 => 1.0,
        _ => -1.0,
    }
}

pub(super) fn node(asym: bool, h: &[u8]) -> NodeKind {
    match h.len() {
        0 => NodeKind::Decision { player: Player::Zero, num_actions: 3 },
        1 => NodeKind::Decision { player: Player::One, num_actions: num_actions(asym, Player::One) },
        _ => {
            let r = payoff(h[0], h[1]);
            NodeKind::Terminal([r, -r])
        }
    }
}

pub(super) fn labels(asym: bool, h: &[u8]) -> Vec<String> {
    let player = if h.is_empty() { Player::Zero } else { Player::One };
    LABELS[..num_actions(asym, player)].iter().map(|s| s.to_string()).collect()
}

/// Neither player observes anything before acting.
pub(super) fn observation(_h: &[u8], _player: Player) -> String {
    String::new()
}
