//! Behavior policies in two representations.
//!
//! [`BehaviorPolicy`] is the serializable form: a map from infostate key to
//! a distribution over the legal actions there. [`TabularPolicy`] is dense
//! and aligned with a [`GameTree`]'s infoset table; the solvers and learners
//! work on it. [`SequenceForm`] holds realization-weighted action
//! probabilities `x(s) * pi(a|s)` on the same layout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Action, InfoKey, Player};
use crate::tree::{GameTree, InfosetTable};

/// Tolerance for "sums to one".
pub const PROB_TOLERANCE: f64 = 1e-9;

/// What to do when a policy has no entry for an infostate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    Uniform,
    Strict,
}

/// Map from infostate key to a probability vector over the legal actions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorPolicy {
    table: BTreeMap<InfoKey, Vec<f64>>,
}

fn check_distribution(key: &InfoKey, probs: &[f64]) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidPolicy { key: key.0.clone(), reason });
    if probs.is_empty() {
        return bad("empty distribution".into());
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return bad(format!("entry {p} is not a probability"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return bad(format!("sums to {sum}"));
    }
    Ok(())
}

impl BehaviorPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: InfoKey, probs: Vec<f64>) -> Result<()> {
        check_distribution(&key, &probs)?;
        self.table.insert(key, probs);
        Ok(())
    }

    pub fn get(&self, key: &InfoKey) -> Option<&[f64]> {
        self.table.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InfoKey, &[f64])> {
        self.table.iter().map(|(k, v)| (k, v.as_slice()))
    }

    /// Probability of `action` at `key`, applying `fallback` when the key is
    /// absent. `num_actions` is only consulted for the uniform fallback.
    pub fn prob(&self, key: &InfoKey, action: Action, num_actions: usize, fallback: Fallback) -> Result<f64> {
        match self.table.get(key) {
            Some(p) => p.get(action).copied().ok_or_else(|| Error::IllegalAction { key: key.0.clone(), action }),
            None => match fallback {
                Fallback::Uniform => Ok(1.0 / num_actions as f64),
                Fallback::Strict => Err(Error::MissingInfostate(key.0.clone())),
            },
        }
    }

    /// Entries owned by `player`.
    pub fn restricted_to(&self, player: Player) -> BehaviorPolicy {
        BehaviorPolicy {
            table: self
                .table
                .iter()
                .filter(|(k, _)| k.owner() == Some(player))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Re-validates every entry (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        self.table.iter().try_for_each(|(k, p)| check_distribution(k, p))
    }
}

/// Probability that `player`'s own actions follow `sequence`: the product of
/// the policy's probabilities for each `(infostate, action)` step.
pub fn realization_plan(policy: &BehaviorPolicy, sequence: &[(InfoKey, Action)]) -> Result<f64> {
    sequence.iter().try_fold(1.0, |acc, (key, a)| {
        let probs = policy.get(key).ok_or_else(|| Error::MissingInfostate(key.0.clone()))?;
        let p = probs.get(*a).ok_or_else(|| Error::IllegalAction { key: key.0.clone(), action: *a })?;
        Ok(acc * p)
    })
}

/// One behavior policy per seat.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub players: [BehaviorPolicy; 2],
}

impl StrategyProfile {
    pub fn new(p0: BehaviorPolicy, p1: BehaviorPolicy) -> Self {
        StrategyProfile { players: [p0, p1] }
    }

    /// Splits a combined key map by the owner encoded in each key.
    pub fn from_combined(policy: &BehaviorPolicy) -> Self {
        StrategyProfile::new(policy.restricted_to(Player::Zero), policy.restricted_to(Player::One))
    }

    /// Both players' entries in one map; keys never collide since they carry the owner.
    pub fn combined(&self) -> BehaviorPolicy {
        let mut out = self.players[0].clone();
        out.table.extend(self.players[1].table.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    pub fn player(&self, p: Player) -> &BehaviorPolicy {
        &self.players[p.index()]
    }

    /// Same distribution for both seats, keyed by a fixed per-seat infostate
    /// (single-decision games such as RPS).
    pub fn symmetric_single(tree: &GameTree, probs: &[f64]) -> Result<Self> {
        let mut out = StrategyProfile::default();
        for p in Player::BOTH {
            for (_, s) in tree.infosets(p).iter() {
                out.players[p.index()].insert(s.key.clone(), probs.to_vec())?;
            }
        }
        Ok(out)
    }
}

/// Dense behavior policy for one player, aligned with that player's infoset table.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    pub player: Player,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(table: &InfosetTable, player: Player) -> Self {
        let mut probs = vec![0.0; table.num_sequences()];
        for (_, s) in table.iter() {
            probs[s.offset..s.offset + s.num_actions].fill(1.0 / s.num_actions as f64);
        }
        TabularPolicy { player, probs }
    }

    /// Deterministic policy choosing `actions[i]` at infoset `i`.
    pub fn pure(table: &InfosetTable, player: Player, actions: &[Action]) -> Self {
        let mut probs = vec![0.0; table.num_sequences()];
        for (id, s) in table.iter() {
            probs[s.offset + actions[id as usize]] = 1.0;
        }
        TabularPolicy { player, probs }
    }

    /// Random policy with each infoset's distribution drawn from a flat Dirichlet.
    pub fn random(table: &InfosetTable, player: Player, rng: &mut impl rand::Rng) -> Self {
        let mut probs = vec![0.0; table.num_sequences()];
        for (_, s) in table.iter() {
            let slice = &mut probs[s.offset..s.offset + s.num_actions];
            for p in slice.iter_mut() {
                *p = rng.sample::<f64, _>(rand_distr::Exp1) + 1e-12;
            }
            let sum: f64 = slice.iter().sum();
            slice.iter_mut().for_each(|p| *p /= sum);
        }
        TabularPolicy { player, probs }
    }

    pub fn from_behavior(tree: &GameTree, player: Player, policy: &BehaviorPolicy, fallback: Fallback) -> Result<Self> {
        let table = tree.infosets(player);
        let mut out = TabularPolicy::uniform(table, player);
        for (_, s) in table.iter() {
            match policy.get(&s.key) {
                Some(p) if p.len() == s.num_actions => out.probs[s.offset..s.offset + s.num_actions].copy_from_slice(p),
                Some(p) => {
                    return Err(Error::InvalidPolicy {
                        key: s.key.0.clone(),
                        reason: format!("{} probabilities for {} legal actions", p.len(), s.num_actions),
                    })
                }
                None if fallback == Fallback::Strict => return Err(Error::MissingInfostate(s.key.0.clone())),
                None => {}
            }
        }
        Ok(out)
    }

    pub fn to_behavior(&self, table: &InfosetTable) -> BehaviorPolicy {
        let mut out = BehaviorPolicy::new();
        for (_, s) in table.iter() {
            out.table.insert(s.key.clone(), self.probs[s.offset..s.offset + s.num_actions].to_vec());
        }
        out
    }

    /// Builds from a raw flat vector; each infoset's slice must be a distribution.
    pub fn from_flat(table: &InfosetTable, player: Player, probs: Vec<f64>) -> Result<Self> {
        assert_eq!(probs.len(), table.num_sequences());
        for (_, s) in table.iter() {
            check_distribution(&s.key, &probs[s.offset..s.offset + s.num_actions])?;
        }
        Ok(TabularPolicy { player, probs })
    }

    pub fn at(&self, table: &InfosetTable, infoset: u32) -> &[f64] {
        let s = table.get(infoset);
        &self.probs[s.offset..s.offset + s.num_actions]
    }

    pub fn flat(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }
}

/// A profile of dense policies.
pub type TabularProfile = [TabularPolicy; 2];

pub fn tabular_profile(tree: &GameTree, profile: &StrategyProfile, fallback: Fallback) -> Result<TabularProfile> {
    Ok([
        TabularPolicy::from_behavior(tree, Player::Zero, &profile.players[0], fallback)?,
        TabularPolicy::from_behavior(tree, Player::One, &profile.players[1], fallback)?,
    ])
}

pub fn uniform_profile(tree: &GameTree) -> TabularProfile {
    [
        TabularPolicy::uniform(tree.infosets(Player::Zero), Player::Zero),
        TabularPolicy::uniform(tree.infosets(Player::One), Player::One),
    ]
}

pub fn behavior_profile(tree: &GameTree, profile: &TabularProfile) -> StrategyProfile {
    StrategyProfile::new(
        profile[0].to_behavior(tree.infosets(Player::Zero)),
        profile[1].to_behavior(tree.infosets(Player::One)),
    )
}

/// Realization-weighted action probabilities `x(s) * pi(a|s)` for one player.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceForm {
    pub player: Player,
    values: Vec<f64>,
}

impl SequenceForm {
    pub fn zeros(table: &InfosetTable, player: Player) -> Self {
        SequenceForm { player, values: vec![0.0; table.num_sequences()] }
    }

    /// Infosets are interned in tree preorder, so parents precede children
    /// and a single forward pass suffices.
    pub fn from_policy(table: &InfosetTable, policy: &TabularPolicy) -> Self {
        let mut values = vec![0.0; table.num_sequences()];
        for (id, s) in table.iter() {
            let reach = match s.parent {
                Some((parent, a)) => values[table.seq(parent, a)],
                None => 1.0,
            };
            let probs = policy.at(table, id);
            for (a, p) in probs.iter().enumerate() {
                values[s.offset + a] = reach * p;
            }
        }
        SequenceForm { player: policy.player, values }
    }

    /// Wraps raw values laid out like `table`'s sequences.
    pub fn from_flat(table: &InfosetTable, player: Player, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), table.num_sequences());
        SequenceForm { player, values }
    }

    /// Own reach probability `x(s)` of an infoset.
    pub fn reach(&self, table: &InfosetTable, infoset: u32) -> f64 {
        match table.get(infoset).parent {
            Some((parent, a)) => self.values[table.seq(parent, a)],
            None => 1.0,
        }
    }

    pub fn value(&self, table: &InfosetTable, infoset: u32, action: Action) -> f64 {
        self.values[table.seq(infoset, action)]
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Normalizes per infoset; infosets with zero mass become uniform.
    pub fn to_policy(&self, table: &InfosetTable) -> TabularPolicy {
        let mut probs = vec![0.0; table.num_sequences()];
        for (_, s) in table.iter() {
            let slice = &self.values[s.offset..s.offset + s.num_actions];
            let mass: f64 = slice.iter().sum();
            for a in 0..s.num_actions {
                probs[s.offset + a] = if mass > 0.0 { slice[a] / mass } else { 1.0 / s.num_actions as f64 };
            }
        }
        TabularPolicy { player: self.player, probs }
    }
}
