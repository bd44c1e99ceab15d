//! Three-card Kuhn poker, ante 1, single bet of 1.
//!
//! Chance deals player 0's card, then player 1's from the remaining two
//! (outcome ids index the remaining cards in ascending order J < Q < K).
//! Decision action ids: 0 Pass, 1 Bet.

use super::{remaining, uniform, NodeKind, Player};

const CARDS: [&str; 3] = ["J", "Q", "K"];

fn deal(h: &[u8]) -> [usize; 2] {
    let c0 = h[0] as usize;
    let c1 = remaining(3, &[c0])[h[1] as usize];
    [c0, c1]
}

fn showdown(cards: [usize; 2], stake: f64) -> NodeKind {
    let r = if cards[0] > cards[1] { stake } else { -stake };
    NodeKind::Terminal([r, -r])
}

pub(super) fn node(h: &[u8]) -> NodeKind {
    match h.len() {
        0 => return NodeKind::Chance(uniform(3)),
        1 => return NodeKind::Chance(uniform(2)),
        _ => {}
    }
    let cards = deal(h);
    let decision = |p| NodeKind::Decision { player: p, num_actions: 2 };
    match &h[2..] {
        [] => decision(Player::Zero),
        [_] => decision(Player::One),
        [0, 0] => showdown(cards, 1.0),
        [0, 1] => decision(Player::Zero),
        [1, 0] => NodeKind::Terminal([1.0, -1.0]),
        [1, 1] => showdown(cards, 2.0),
        [0, 1, 0] => NodeKind::Terminal([-1.0, 1.0]),
        [0, 1, 1] => showdown(cards, 2.0),
        other => unreachable!("history beyond terminal: {other:?}"),
    }
}

pub(super) fn labels(h: &[u8]) -> Vec<String> {
    match h.len() {
        0 => CARDS.iter().map(|s| s.to_string()).collect(),
        1 => remaining(3, &[h[0] as usize]).iter().map(|&c| CARDS[c].to_string()).collect(),
        _ => vec!["Pass".into(), "Bet".into()],
    }
}

pub(super) fn observation(h: &[u8], player: Player) -> String {
    if h.len() <= player.index() {
        return String::new();
    }
    let card = if player == Player::Zero { h[0] as usize } else { deal(h)[1] };
    let betting: String =
        h.iter().skip(2).map(|&a| if a == 0 { 'p' } else { 'b' }).collect();
    format!("{}|{}", CARDS[card], betting)
}
