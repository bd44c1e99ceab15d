//! Leduc hold'em: six cards (two suits of J, Q, K), ante 1, two betting
//! rounds with fixed raises of 2 then 4 and at most two raises per round.
//! A public card is dealt between rounds; pairing it wins, otherwise the
//! higher rank wins, equal ranks split.
//!
//! Chance outcome ids index the undealt cards in ascending order, cards
//! being `J1 J2 Q1 Q2 K1 K2`. Decision labels: Fold, Call (check when no
//! bet is outstanding), Raise. Legal lists: no outstanding bet `[Call, Raise]`;
//! facing a bet `[Fold, Call, Raise]`; `Raise` dropped after two raises.
//! Infostate keys record ranks only: suits are strategically irrelevant.

use super::{remaining, uniform, NodeKind, Player};

const RANKS: [char; 3] = ['J', 'Q', 'K'];
const MAX_RAISES: usize = 2;
const RAISE: [f64; 2] = [2.0, 4.0];

fn card_label(c: usize) -> String {
    format!("{}{}", RANKS[c / 2], c % 2 + 1)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Move {
    Fold,
    Call,
    Raise,
}

fn legal(raises: usize, facing: bool) -> Vec<Move> {
    let mut moves = if facing { vec![Move::Fold, Move::Call] } else { vec![Move::Call] };
    if raises < MAX_RAISES {
        moves.push(Move::Raise);
    }
    moves
}

/// Parsed history.
struct Hand {
    cards: Vec<usize>,
    /// Betting actions, per round, as moves.
    rounds: [Vec<Move>; 2],
    phase: Phase,
}

enum Phase {
    Deal,
    Bet { player: Player, raises: usize, facing: bool },
    Board,
    Over([f64; 2]),
}

fn replay(h: &[u8]) -> Hand {
    let mut cards = Vec::new();
    let mut rounds: [Vec<Move>; 2] = [Vec::new(), Vec::new()];
    let mut contrib = [1.0f64; 2];
    let mut iter = h.iter().copied();

    for _ in 0..2 {
        match iter.next() {
            Some(a) => {
                let c = remaining(6, &cards)[a as usize];
                cards.push(c);
            }
            None => return Hand { cards, rounds, phase: Phase::Deal },
        }
    }

    for round in 0..2 {
        if round == 1 {
            match iter.next() {
                Some(a) => {
                    let c = remaining(6, &cards)[a as usize];
                    cards.push(c);
                }
                None => return Hand { cards, rounds, phase: Phase::Board },
            }
        }
        let mut player = Player::Zero;
        let mut raises = 0;
        let mut facing = false;
        let mut acted = 0;
        loop {
            let Some(a) = iter.next() else {
                return Hand { cards, rounds, phase: Phase::Bet { player, raises, facing } };
            };
            let me = player.index();
            let mv = legal(raises, facing)[a as usize];
            rounds[round].push(mv);
            acted += 1;
            match mv {
                Move::Fold => {
                    let loss = contrib[me];
                    let mut r = [loss; 2];
                    r[me] = -loss;
                    return Hand { cards, rounds, phase: Phase::Over(r) };
                }
                Move::Call => {
                    contrib[me] = contrib[1 - me];
                    if facing || acted >= 2 {
                        break;
                    }
                }
                Move::Raise => {
                    contrib[me] = contrib[1 - me] + RAISE[round];
                    raises += 1;
                    facing = true;
                }
            }
            if mv == Move::Call {
                facing = false;
            }
            player = player.opponent();
        }
    }

    let rank = |c: usize| c / 2;
    let board = rank(cards[2]);
    let strength = |c: usize| if rank(c) == board { 10 + rank(c) } else { rank(c) };
    let (s0, s1) = (strength(cards[0]), strength(cards[1]));
    let stake = contrib[0];
    let r = match s0.cmp(&s1) {
        std::cmp::Ordering::Greater => stake,
        std::cmp::Ordering::Less => -stake,
        std::cmp::Ordering::Equal => 0.0,
    };
    Hand { cards, rounds, phase: Phase::Over([r, -r]) }
}

pub(super) fn node(h: &[u8]) -> NodeKind {
    let hand = replay(h);
    match hand.phase {
        Phase::Deal => NodeKind::Chance(uniform(6 - hand.cards.len())),
        Phase::Board => NodeKind::Chance(uniform(4)),
        Phase::Bet { player, raises, facing } => {
            NodeKind::Decision { player, num_actions: legal(raises, facing).len() }
        }
        Phase::Over(r) => NodeKind::Terminal(r),
    }
}

pub(super) fn labels(h: &[u8]) -> Vec<String> {
    let hand = replay(h);
    match hand.phase {
        Phase::Deal | Phase::Board => remaining(6, &hand.cards).into_iter().map(card_label).collect(),
        Phase::Bet { raises, facing, .. } => {
            legal(raises, facing).iter().map(|m| format!("{m:?}")).collect()
        }
        Phase::Over(_) => Vec::new(),
    }
}

pub(super) fn observation(h: &[u8], player: Player) -> String {
    let hand = replay(h);
    let Some(&own) = hand.cards.get(player.index()) else {
        return String::new();
    };
    let code = |moves: &[Move]| -> String {
        moves.iter().map(|m| if *m == Move::Raise { 'r' } else { 'c' }).collect()
    };
    let mut key = format!("{}|{}", RANKS[own / 2], code(&hand.rounds[0]));
    if let Some(&board) = hand.cards.get(2) {
        key.push_str(&format!("|{}|{}", RANKS[board / 2], code(&hand.rounds[1])));
    }
    key
}
