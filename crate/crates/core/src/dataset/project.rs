//! Per-player views of a game dataset.

use std::ops::Range;

use super::GameDataset;
use crate::error::{Error, Result};
use crate::game::{Action, Player};
use crate::tree::GameTree;

/// `(s, a, r, s')` from one player's perspective. States are infoset ids in
/// the owner's table; `next == None` marks the end of the owner's episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlayerTuple {
    pub infoset: u32,
    pub action: Action,
    pub reward: f64,
    pub next: Option<u32>,
    /// Index into [`PlayerDataset::trajectories`].
    pub trajectory: u32,
    /// Opponent decisions taken before the transition to `next` completed
    /// (all of them for the final tuple). The last of these is the anchor at
    /// which the tuple's importance weight is evaluated.
    pub opp_prefix: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlayerTrajectory {
    /// Index of the source trajectory in the game dataset.
    pub source: usize,
    pub tuples: Range<usize>,
    /// Slice of [`PlayerDataset::opponent_decisions`].
    pub opponent: Range<usize>,
}

/// One player's tuples, plus the opponent decisions needed to reweight them.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerDataset {
    pub player: Player,
    pub tuples: Vec<PlayerTuple>,
    pub trajectories: Vec<PlayerTrajectory>,
    /// `(opponent infoset id, action)` in play order, concatenated over trajectories.
    pub opponent_decisions: Vec<(u32, Action)>,
}

impl PlayerDataset {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Opponent decisions preceding the tuple's anchor, inclusive.
    pub fn opponent_prefix(&self, tuple: &PlayerTuple) -> &[(u32, Action)] {
        let range = &self.trajectories[tuple.trajectory as usize].opponent;
        &self.opponent_decisions[range.start..range.start + tuple.opp_prefix as usize]
    }
}

/// Splits every trajectory into `player`'s transitions. Intermediate rewards
/// are zero; the final transition carries the player's return.
pub fn project(tree: &GameTree, d: &GameDataset, player: Player) -> Result<PlayerDataset> {
    let own = tree.infosets(player);
    let opp = tree.infosets(player.opponent());
    let mut out = PlayerDataset {
        player,
        tuples: Vec::new(),
        trajectories: Vec::with_capacity(d.len()),
        opponent_decisions: Vec::new(),
    };
    let unknown = |index: usize, key: &crate::game::InfoKey| Error::InvalidTrajectory {
        index,
        reason: format!("unknown infostate `{key}`"),
    };
    for (index, t) in d.trajectories.iter().enumerate() {
        let traj_id = out.trajectories.len() as u32;
        let opp_start = out.opponent_decisions.len();
        // Event index of each opponent decision, to place anchors.
        let mut opp_events = Vec::new();
        for (e, key, a) in t.decisions(player.opponent()) {
            out.opponent_decisions.push((opp.lookup(key).ok_or_else(|| unknown(index, key))?, a));
            opp_events.push(e);
        }
        let own_steps: Vec<(usize, u32, Action)> = t
            .decisions(player)
            .map(|(e, key, a)| Ok((e, own.lookup(key).ok_or_else(|| unknown(index, key))?, a)))
            .collect::<Result<_>>()?;
        let tuple_start = out.tuples.len();
        for (i, &(_, infoset, action)) in own_steps.iter().enumerate() {
            let (next, reward, boundary) = match own_steps.get(i + 1) {
                Some(&(e, s, _)) => (Some(s), 0.0, e),
                None => (None, t.returns[player.index()], t.events.len()),
            };
            let opp_prefix = opp_events.iter().take_while(|&&e| e < boundary).count() as u32;
            out.tuples.push(PlayerTuple { infoset, action, reward, next, trajectory: traj_id, opp_prefix });
        }
        out.trajectories.push(PlayerTrajectory {
            source: index,
            tuples: tuple_start..out.tuples.len(),
            opponent: opp_start..out.opponent_decisions.len(),
        });
    }
    Ok(out)
}
