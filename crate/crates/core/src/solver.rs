//! Exact evaluation on a fully enumerated tree: expected values, best
//! responses, NashConv, and an extensive-form fictitious-play solver.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{Action, Actor, GameSpec, NodeKind, Player};
use crate::off_fsp::lambda_mix;
use crate::policy::{BehaviorPolicy, Fallback, SequenceForm, StrategyProfile, TabularPolicy, TabularProfile};
use crate::tree::{GameTree, TreeNode};

/// Action values closer than this are treated as tied (lowest id wins).
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Exact expected payoff of each player under `profile`.
pub fn expected_value(tree: &GameTree, profile: &TabularProfile) -> [f64; 2] {
    let nodes = tree.nodes();
    let mut value = vec![0.0f64; nodes.len()];
    for id in (0..nodes.len()).rev() {
        value[id] = match &nodes[id] {
            TreeNode::Terminal { returns } => returns[0],
            TreeNode::Chance { .. } => tree.children(id as u32).iter().map(|e| e.prob * value[e.child as usize]).sum(),
            TreeNode::Decision { player, infoset, .. } => {
                let probs = profile[player.index()].at(tree.infosets(*player), *infoset);
                tree.children(id as u32)
                    .iter()
                    .zip(probs)
                    .map(|(e, p)| p * value[e.child as usize])
                    .sum()
            }
        };
    }
    [value[0], -value[0]]
}

/// A pure best response and its value.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub responder: Player,
    pub policy: TabularPolicy,
    /// The responder's expected payoff against the opponent.
    pub value: f64,
}

struct BrSearch<'a> {
    tree: &'a GameTree,
    opponent: &'a TabularPolicy,
    responder: Player,
    /// Chance-and-opponent reach of every node.
    reach: Vec<f64>,
    members: Vec<Vec<u32>>,
    choice: Vec<Option<Action>>,
    value: Vec<Option<f64>>,
}

impl BrSearch<'_> {
    fn value(&mut self, id: u32) -> f64 {
        if let Some(v) = self.value[id as usize] {
            return v;
        }
        let v = match self.tree.node(id) {
            TreeNode::Terminal { returns } => returns[self.responder.index()],
            TreeNode::Chance { .. } => {
                let edges = self.tree.children(id);
                edges.iter().map(|e| e.prob * self.value(e.child)).sum()
            }
            &TreeNode::Decision { player, infoset, .. } if player != self.responder => {
                let probs = self.opponent.at(self.tree.infosets(player), infoset);
                let edges = self.tree.children(id);
                let mut v = 0.0;
                for (e, p) in edges.iter().zip(probs) {
                    if *p > 0.0 {
                        v += p * self.value(e.child);
                    }
                }
                v
            }
            &TreeNode::Decision { infoset, .. } => {
                let a = self.choose(infoset);
                let child = self.tree.children(id)[a].child;
                self.value(child)
            }
        };
        self.value[id as usize] = Some(v);
        v
    }

    fn choose(&mut self, infoset: u32) -> Action {
        if let Some(a) = self.choice[infoset as usize] {
            return a;
        }
        let n = self.tree.infosets(self.responder).get(infoset).num_actions;
        let mut q = vec![0.0; n];
        let members = std::mem::take(&mut self.members[infoset as usize]);
        for &h in &members {
            let w = self.reach[h as usize];
            if w == 0.0 {
                continue;
            }
            for (a, qa) in q.iter_mut().enumerate() {
                let child = self.tree.children(h)[a].child;
                *qa += w * self.value(child);
            }
        }
        self.members[infoset as usize] = members;
        let best = argmax_lowest(&q);
        self.choice[infoset as usize] = Some(best);
        best
    }
}

/// Index of the largest value; ties within [`TIE_TOLERANCE`] go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (a, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] + TIE_TOLERANCE {
            best = a;
        }
    }
    best
}

/// Exact best response of `responder` to `opponent`.
///
/// One top-down pass computes chance-and-opponent reach; responder
/// infosets are then resolved lazily, deepest first, by comparing
/// reach-weighted action values summed over the infoset's histories.
pub fn best_response(tree: &GameTree, opponent: &TabularPolicy, responder: Player) -> BestResponse {
    debug_assert_eq!(opponent.player, responder.opponent());
    let nodes = tree.nodes();
    let mut reach = vec![0.0f64; nodes.len()];
    reach[0] = 1.0;
    let table = tree.infosets(responder);
    let mut members = vec![Vec::new(); table.len()];
    for id in 0..nodes.len() {
        let r = reach[id];
        match &nodes[id] {
            TreeNode::Terminal { .. } => {}
            TreeNode::Chance { .. } => {
                for e in tree.children(id as u32) {
                    reach[e.child as usize] = r * e.prob;
                }
            }
            TreeNode::Decision { player, infoset, .. } => {
                if *player == responder {
                    members[*infoset as usize].push(id as u32);
                    for e in tree.children(id as u32) {
                        reach[e.child as usize] = r;
                    }
                } else {
                    let probs = opponent.at(tree.infosets(*player), *infoset);
                    for (e, p) in tree.children(id as u32).iter().zip(probs) {
                        reach[e.child as usize] = r * p;
                    }
                }
            }
        }
    }
    let mut search = BrSearch {
        tree,
        opponent,
        responder,
        reach,
        members,
        choice: vec![None; table.len()],
        value: vec![None; nodes.len()],
    };
    let value = search.value(tree.root());
    let actions: Vec<Action> = (0..table.len() as u32).map(|i| search.choose(i)).collect();
    BestResponse { responder, policy: TabularPolicy::pure(table, responder, &actions), value }
}

/// Exploitability decomposition of a profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NashConvReport {
    pub total: f64,
    /// `BR value - profile value` for each player.
    pub per_player_gain: [f64; 2],
    pub br_values: [f64; 2],
    pub profile_values: [f64; 2],
}

pub fn nash_conv(tree: &GameTree, profile: &TabularProfile) -> NashConvReport {
    let profile_values = expected_value(tree, profile);
    let br_values = [
        best_response(tree, &profile[1], Player::Zero).value,
        best_response(tree, &profile[0], Player::One).value,
    ];
    let per_player_gain = [br_values[0] - profile_values[0], br_values[1] - profile_values[1]];
    NashConvReport { total: per_player_gain[0] + per_player_gain[1], per_player_gain, br_values, profile_values }
}

/// Extensive-form fictitious play with exact best responses and `alpha_k = 1/k`.
///
/// Starts from the uniform profile. Each iteration computes both players'
/// best responses to the previous average and mixes them in with the
/// realization-weighted behavioral update. Returns the average profile at
/// every multiple of `checkpoint_every` and at the final iteration.
pub fn fp_solve(tree: &GameTree, iterations: usize, checkpoint_every: usize) -> Vec<(usize, TabularProfile)> {
    assert!(iterations >= 1 && checkpoint_every >= 1);
    let mut avg: TabularProfile = crate::policy::uniform_profile(tree);
    let mut out = Vec::new();
    for k in 1..=iterations {
        let alpha = 1.0 / k as f64;
        let br = [
            best_response(tree, &avg[1], Player::Zero).policy,
            best_response(tree, &avg[0], Player::One).policy,
        ];
        for p in Player::BOTH {
            avg[p.index()] = mix_behavior(tree.infosets(p), &avg[p.index()], &br[p.index()], alpha);
        }
        if k % checkpoint_every == 0 || k == iterations {
            out.push((k, avg.clone()));
        }
    }
    out
}

/// Behavioral form of the average-policy update: at each infoset the new
/// policy is `(1 - lambda) * prev + lambda * br` with `lambda` weighting the
/// two policies by their own reach probabilities.
pub fn mix_behavior(
    table: &crate::tree::InfosetTable,
    prev: &TabularPolicy,
    br: &TabularPolicy,
    alpha: f64,
) -> TabularPolicy {
    let x_prev = SequenceForm::from_policy(table, prev);
    let x_br = SequenceForm::from_policy(table, br);
    let mut out = prev.clone();
    for (id, s) in table.iter() {
        let lambda = lambda_mix(alpha, x_prev.reach(table, id), x_br.reach(table, id));
        let p = prev.at(table, id);
        let b = br.at(table, id);
        let dst = &mut out.flat_mut()[s.offset..s.offset + s.num_actions];
        for a in 0..s.num_actions {
            dst[a] = (1.0 - lambda) * p[a] + lambda * b[a];
        }
    }
    out
}

/// Monte-Carlo estimate of each player's payoff, driven by the rules engine
/// rather than the enumerated tree. Returns `(mean, standard error)`.
pub fn monte_carlo_value(
    spec: &GameSpec,
    profile: &StrategyProfile,
    fallback: Fallback,
    episodes: usize,
    rng: &mut impl Rng,
) -> Result<([f64; 2], [f64; 2])> {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..episodes {
        let r = play_episode(spec, profile, fallback, rng)?;
        sum += r[0];
        sum_sq += r[0] * r[0];
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let se = (var / n).sqrt();
    Ok(([mean, -mean], [se, se]))
}

fn play_episode(spec: &GameSpec, profile: &StrategyProfile, fallback: Fallback, rng: &mut impl Rng) -> Result<[f64; 2]> {
    let mut state = spec.initial_state();
    loop {
        let action = match state.node() {
            NodeKind::Terminal(r) => return Ok(*r),
            NodeKind::Chance(p) => sample_index(p, rng),
            &NodeKind::Decision { player, num_actions } => {
                let key = spec.infostate_key(&state, player);
                let probs = policy_probs(profile.player(player), &key, num_actions, fallback)?;
                sample_index(&probs, rng)
            }
        };
        state = spec.apply(&state, action)?;
        debug_assert!(state.is_terminal() || matches!(spec.current_player(&state), Ok(Actor::Player(_) | Actor::Chance)));
    }
}

pub(crate) fn policy_probs(
    policy: &BehaviorPolicy,
    key: &crate::game::InfoKey,
    num_actions: usize,
    fallback: Fallback,
) -> Result<Vec<f64>> {
    (0..num_actions).map(|a| policy.prob(key, a, num_actions, fallback)).collect()
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum: take the last positive entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}
