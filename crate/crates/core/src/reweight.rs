//! Opponent importance weights and weighted resampling.
//!
//! A tuple of player `i` is weighted by how much more (or less) likely the
//! opponent's actions leading up to it are under a target opponent than
//! under the dataset's empirical behavior:
//! `w = x_target(s_j) pi_target(a_j|s_j) / prod_t pi_b(a_t|s_t)`, where
//! `(s_j, a_j)` is the last opponent decision before the tuple's successor
//! state. Chance and the player's own actions cancel. Tuples are then drawn
//! with probability `w / Z` rather than having their losses scaled.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::dataset::{ExtensiveTrajectory, PlayerDataset};
use crate::error::{Error, Result};
use crate::game::{Actor, Player};
use crate::policy::{BehaviorPolicy, SequenceForm, TabularPolicy};
use crate::tree::GameTree;

/// Reference computation of a tuple's weight directly from the event record.
///
/// `tuple_index` counts `owner`'s decisions in the trajectory. Every event up
/// to the owner's next decision (or the end) contributes: opponent decisions
/// the ratio `target / behavior`, chance events 1.
pub fn opponent_ratio(
    trajectory: &ExtensiveTrajectory,
    tuple_index: usize,
    target: &BehaviorPolicy,
    behavior: &BehaviorPolicy,
    owner: Player,
) -> Result<f64> {
    let own: Vec<usize> = trajectory.decisions(owner).map(|d| d.0).collect();
    if tuple_index >= own.len() {
        return Err(Error::InvalidTrajectory {
            index: tuple_index,
            reason: format!("trajectory has only {} decisions of player {owner}", own.len()),
        });
    }
    let boundary = own.get(tuple_index + 1).copied().unwrap_or(trajectory.events.len());
    let mut ratio = 1.0;
    for e in &trajectory.events[..boundary] {
        if let (Actor::Player(p), Some(key)) = (&e.actor, &e.key) {
            if *p == owner {
                continue;
            }
            let b = behavior.get(key).and_then(|v| v.get(e.action)).copied().unwrap_or(0.0);
            if b <= 0.0 {
                return Err(Error::ZeroBehaviorProbability { key: key.to_string(), action: e.action });
            }
            let t = target.get(key).ok_or_else(|| Error::MissingInfostate(key.to_string()))?;
            ratio *= t.get(e.action).copied().unwrap_or(0.0) / b;
        }
    }
    Ok(ratio)
}

/// Precomputed, iteration-independent parts of the weights of one player
/// dataset: each tuple's anchor sequence and its behavior denominator.
#[derive(Clone, Debug)]
pub struct Reweighter {
    data: Arc<PlayerDataset>,
    /// Flat opponent sequence index of the anchor.
    anchors: Vec<Option<usize>>,
    behavior_reach: Vec<f64>,
}

impl Reweighter {
    /// `behavior` is the opponent's empirical behavior policy.
    pub fn new(tree: &GameTree, data: Arc<PlayerDataset>, behavior: &TabularPolicy) -> Result<Self> {
        let table = tree.infosets(data.player.opponent());
        let mut anchors = Vec::with_capacity(data.len());
        let mut behavior_reach = Vec::with_capacity(data.len());
        for t in &data.tuples {
            let prefix = data.opponent_prefix(t);
            let mut reach = 1.0;
            for &(s, a) in prefix {
                let b = behavior.at(table, s)[a];
                if b <= 0.0 {
                    return Err(Error::ZeroBehaviorProbability { key: table.get(s).key.to_string(), action: a });
                }
                reach *= b;
            }
            anchors.push(prefix.last().map(|&(s, a)| table.seq(s, a)));
            behavior_reach.push(reach);
        }
        Ok(Reweighter { data, anchors, behavior_reach })
    }

    pub fn data(&self) -> &Arc<PlayerDataset> {
        &self.data
    }

    /// Weights against an opponent given by its sequence-form values; entries
    /// above `cap` are clipped.
    pub fn weigh(&self, target: &SequenceForm, cap: Option<f64>) -> Result<WeightedPlayerDataset> {
        if target.player != self.data.player.opponent() {
            return Err(Error::Config("target sequence form must belong to the opponent".into()));
        }
        let x = target.flat();
        let weights = self
            .anchors
            .iter()
            .zip(&self.behavior_reach)
            .map(|(anchor, reach)| {
                let w = anchor.map_or(1.0, |s| x[s] / reach);
                cap.map_or(w, |c| w.min(c))
            })
            .collect();
        WeightedPlayerDataset::new(self.data.clone(), weights)
    }
}

/// Convenience wrapper building a [`Reweighter`] for a single weighing.
pub fn generate_data(
    tree: &GameTree,
    data: Arc<PlayerDataset>,
    target: &SequenceForm,
    behavior: &TabularPolicy,
    cap: Option<f64>,
) -> Result<WeightedPlayerDataset> {
    Reweighter::new(tree, data, behavior)?.weigh(target, cap)
}

/// A player dataset with per-tuple sampling weights.
#[derive(Clone, Debug)]
pub struct WeightedPlayerDataset {
    pub data: Arc<PlayerDataset>,
    pub weights: Vec<f64>,
    total: f64,
    sampler: Option<AliasTable>,
}

impl WeightedPlayerDataset {
    pub fn new(data: Arc<PlayerDataset>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != data.len() {
            return Err(Error::Config(format!("{} weights for {} tuples", weights.len(), data.len())));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Config(format!("invalid tuple weight {w}")));
        }
        let total = weights.iter().sum();
        let sampler = (total > 0.0).then(|| AliasTable::new(&weights));
        Ok(WeightedPlayerDataset { data, weights, total, sampler })
    }

    /// Every tuple with weight 1.
    pub fn uniform(data: Arc<PlayerDataset>) -> Self {
        let weights = vec![1.0; data.len()];
        Self::new(data, weights).expect("unit weights are valid")
    }

    /// Normalizer `Z`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// I.i.d. tuple indices drawn with probability `w / Z` (alias method).
    pub fn resample_batch(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(batch_size);
        self.resample_into(batch_size, rng, &mut out)?;
        Ok(out)
    }

    pub fn resample_into(&self, batch_size: usize, rng: &mut impl Rng, out: &mut Vec<usize>) -> Result<()> {
        let sampler = self.sampler.as_ref().ok_or(Error::DegenerateDataset)?;
        out.clear();
        out.extend((0..batch_size).map(|_| sampler.sample(rng.next_u64())));
        Ok(())
    }

    /// CSV dump: trajectory, tuple, weight.
    pub fn write_weights_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "trajectory,tuple,weight")?;
        for (i, (t, weight)) in self.data.tuples.iter().zip(&self.weights).enumerate() {
            let source = self.data.trajectories[t.trajectory as usize].source;
            writeln!(w, "{source},{i},{weight}")?;
        }
        Ok(())
    }
}

/// Walker/Vose alias table. A draw consumes one `u64`: the high half picks a
/// column by multiply-shift (bias below `n / 2^32`), the low half decides
/// between the column and its alias.
#[derive(Clone, Debug)]
struct AliasTable {
    /// Acceptance threshold of each column, scaled to `2^32`.
    accept: Vec<u64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// `weights` must be non-negative with a positive sum.
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut small: Vec<usize> = (0..n).filter(|&i| scaled[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| scaled[i] >= 1.0).collect();
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding.
        for i in large.into_iter().chain(small) {
            scaled[i] = 1.0;
        }
        let accept = scaled.iter().map(|p| (p.clamp(0.0, 1.0) * 4294967296.0) as u64).collect();
        AliasTable { accept, alias }
    }

    fn sample(&self, bits: u64) -> usize {
        let col = (((bits >> 32) * self.accept.len() as u64) >> 32) as usize;
        if bits & 0xffff_ffff < self.accept[col] {
            col
        } else {
            self.alias[col] as usize
        }
    }
}
