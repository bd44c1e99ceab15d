//! Tabular offline RL learners used to approximate best responses from
//! (reweighted) player datasets: behavior cloning, Q-learning, CQL,
//! discrete BCQ and CRR.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PlayerDataset;
use crate::error::{Error, Result};
use crate::game::{Action, Player};
use crate::policy::TabularPolicy;
use crate::reweight::WeightedPlayerDataset;
use crate::solver::argmax_lowest;
use crate::tree::InfosetTable;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bc,
    Qlearning,
    #[default]
    Cql,
    Bcq,
    Crr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [Algorithm::Bc, Algorithm::Qlearning, Algorithm::Cql, Algorithm::Bcq, Algorithm::Crr];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bc => "bc",
            Algorithm::Qlearning => "qlearning",
            Algorithm::Cql => "cql",
            Algorithm::Bcq => "bcq",
            Algorithm::Crr => "crr",
        }
    }

    pub fn parse(name: &str) -> Result<Algorithm> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{name}` (bc, qlearning, cql, bcq, crr)")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// CQL penalty weights for each game and dataset family.
pub fn default_cql_alpha(game: &str, recipe: &str) -> f64 {
    match game {
        "leduc" if recipe.starts_with("population") => 0.5,
        "leduc" => 2.0,
        "large_kuhn" => 0.1,
        "oshi_zumo" => 0.01,
        _ => DEFAULT_CQL_ALPHA,
    }
}

/// Penalty weight for games without a tuned value (RPS, Kuhn).
pub const DEFAULT_CQL_ALPHA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Resample-and-update cycles per best-response computation.
    pub steps: usize,
    pub target_update_every: usize,
    pub gamma: f64,
    pub cql_alpha: f64,
    pub bcq_threshold: f64,
    pub crr_beta: f64,
    pub crr_ratio_bound: f64,
    /// Upper clip on importance weights; none by default.
    pub weight_cap: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            algorithm: Algorithm::Cql,
            learning_rate: 1e-3,
            batch_size: 1024,
            steps: 1000,
            target_update_every: 100,
            gamma: 1.0,
            cql_alpha: DEFAULT_CQL_ALPHA,
            bcq_threshold: 0.1,
            crr_beta: 1.0,
            crr_ratio_bound: 20.0,
            weight_cap: None,
        }
    }
}

impl LearnerConfig {
    /// Defaults with the game's CQL penalty weight.
    pub fn for_game(game: &str, recipe: &str) -> Self {
        LearnerConfig { cql_alpha: default_cql_alpha(game, recipe), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.target_update_every == 0 {
            return bad("batch_size and target_update_every must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.cql_alpha >= 0.0 && self.cql_alpha.is_finite()) {
            return bad("cql_alpha must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.bcq_threshold) {
            return bad("bcq_threshold must lie in [0, 1]");
        }
        if !(self.crr_beta > 0.0 && self.crr_ratio_bound >= 1.0) {
            return bad("crr_beta must be positive and crr_ratio_bound at least 1");
        }
        if self.weight_cap.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("weight_cap must be positive");
        }
        Ok(())
    }
}

/// Action values over one player's infosets, dense over sequences. Infosets
/// never updated are "unvisited" and extract to the uniform policy.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    pub player: Player,
    values: Vec<f64>,
    visited: Vec<bool>,
}

impl QTable {
    pub fn zeros(table: &InfosetTable, player: Player) -> Self {
        QTable { player, values: vec![0.0; table.num_sequences()], visited: vec![false; table.len()] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row<'a>(&'a self, table: &InfosetTable, infoset: u32) -> &'a [f64] {
        let s = table.get(infoset);
        &self.values[s.offset..s.offset + s.num_actions]
    }

    pub fn get(&self, table: &InfosetTable, infoset: u32, action: Action) -> f64 {
        self.values[table.seq(infoset, action)]
    }

    pub fn set(&mut self, table: &InfosetTable, infoset: u32, action: Action, value: f64) {
        self.values[table.seq(infoset, action)] = value;
        self.visited[infoset as usize] = true;
    }

    pub fn is_visited(&self, infoset: u32) -> bool {
        self.visited[infoset as usize]
    }

    /// `infostate,action,value` for visited infosets.
    pub fn write_csv(&self, table: &InfosetTable, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["infostate", "action", "value"]).map_err(csv_err)?;
        for (id, s) in table.iter().filter(|(id, _)| self.visited[*id as usize]) {
            for (a, v) in self.row(table, id).iter().enumerate() {
                out.write_record([s.key.as_str(), &a.to_string(), &v.to_string()]).map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Allowed actions per sequence; infosets without any allowed action are
/// unconstrained.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionMask {
    allowed: Vec<bool>,
}

impl ActionMask {
    /// Applies [`bcq_mask`] to the per-infoset action frequencies in `counts`.
    pub fn from_counts(table: &InfosetTable, counts: &[f64], threshold: f64) -> Self {
        let mut allowed = vec![false; table.num_sequences()];
        for (_, s) in table.iter() {
            let range = s.offset..s.offset + s.num_actions;
            allowed[range.clone()].copy_from_slice(&bcq_mask(&counts[range], threshold));
        }
        ActionMask { allowed }
    }

    /// Allowed flags of an infoset, or `None` when it is unconstrained.
    pub fn row<'a>(&'a self, table: &InfosetTable, infoset: u32) -> Option<&'a [bool]> {
        let s = table.get(infoset);
        let row = &self.allowed[s.offset..s.offset + s.num_actions];
        row.iter().any(|a| *a).then_some(row)
    }
}

/// Actions whose frequency relative to the most frequent action exceeds
/// `threshold`. Frequencies may be unnormalized; all-zero input allows nothing.
pub fn bcq_mask(freq: &[f64], threshold: f64) -> Vec<bool> {
    let max = freq.iter().copied().fold(0.0, f64::max);
    freq.iter().map(|f| max > 0.0 && f / max > threshold).collect()
}

/// Total weight of each `(infoset, action)` pair.
pub fn weighted_counts(table: &InfosetTable, wd: &WeightedPlayerDataset) -> Vec<f64> {
    let mut counts = vec![0.0; table.num_sequences()];
    for (t, w) in wd.data.tuples.iter().zip(&wd.weights) {
        counts[table.seq(t.infoset, t.action)] += w;
    }
    counts
}

fn normalize_rows(table: &InfosetTable, player: Player, mass: &[f64]) -> TabularPolicy {
    let mut probs = vec![0.0; table.num_sequences()];
    for (_, s) in table.iter() {
        let row = &mass[s.offset..s.offset + s.num_actions];
        let total: f64 = row.iter().sum();
        for a in 0..s.num_actions {
            probs[s.offset + a] = if total > 0.0 { row[a] / total } else { 1.0 / s.num_actions as f64 };
        }
    }
    TabularPolicy::from_flat(table, player, probs).expect("normalized rows")
}

/// Weighted behavior cloning: `w-count(s, a) / w-count(s)`.
pub fn learn_bc(table: &InfosetTable, wd: &WeightedPlayerDataset) -> Result<TabularPolicy> {
    if wd.total() <= 0.0 {
        return Err(Error::DegenerateDataset);
    }
    Ok(normalize_rows(table, wd.data.player, &weighted_counts(table, wd)))
}

/// A tuple flattened to sequence offsets.
#[derive(Clone, Copy)]
struct Step {
    infoset: u32,
    seq: u32,
    row: u32,
    len: u32,
    /// Successor row; `next_len == 0` at the end of the episode.
    next_row: u32,
    next_len: u32,
    reward: f64,
}

/// Q-update kernel over a fixed player dataset.
struct Updater {
    steps: Vec<Step>,
    /// Actions eligible for the bootstrap max (BCQ); `None` allows all.
    eligible: Option<Vec<bool>>,
    soft: Vec<f64>,
    stamp: Vec<u32>,
    batch_no: u32,
}

impl Updater {
    fn new(table: &InfosetTable, data: &PlayerDataset, mask: Option<&ActionMask>) -> Self {
        let steps = data
            .tuples
            .iter()
            .map(|t| {
                let s = table.get(t.infoset);
                let (next_row, next_len) = t.next.map_or((0, 0), |n| {
                    let n = table.get(n);
                    (n.offset as u32, n.num_actions as u32)
                });
                Step {
                    infoset: t.infoset,
                    seq: (s.offset + t.action) as u32,
                    row: s.offset as u32,
                    len: s.num_actions as u32,
                    next_row,
                    next_len,
                    reward: t.reward,
                }
            })
            .collect();
        let eligible = mask.map(|m| {
            let mut out = vec![true; table.num_sequences()];
            for (id, s) in table.iter() {
                if let Some(row) = m.row(table, id) {
                    out[s.offset..s.offset + s.num_actions].copy_from_slice(row);
                }
            }
            out
        });
        let n = table.num_sequences();
        Updater { steps, eligible, soft: vec![0.0; n], stamp: vec![0; n], batch_no: 0 }
    }

    /// Sequential TD updates; with `alpha > 0` each tuple also takes a step on
    /// the conservative penalty, whose softmax is evaluated once per state at
    /// the values the batch started from.
    fn apply(&mut self, q: &mut QTable, target: &[f64], batch: &[usize], gamma: f64, lr: f64, alpha: f64) {
        self.batch_no = self.batch_no.wrapping_add(1).max(1);
        let values = &mut q.values[..];
        for &i in batch {
            let st = self.steps[i];
            let mut y = st.reward;
            if st.next_len > 0 {
                let next = st.next_row as usize..(st.next_row + st.next_len) as usize;
                let best = match &self.eligible {
                    Some(ok) => target[next.clone()]
                        .iter()
                        .zip(&ok[next])
                        .filter(|(_, ok)| **ok)
                        .fold(f64::NEG_INFINITY, |m, (v, _)| m.max(*v)),
                    None => target[next].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)),
                };
                y += gamma * best;
            }
            let idx = st.seq as usize;
            if alpha != 0.0 {
                let row = st.row as usize..(st.row + st.len) as usize;
                if self.stamp[st.row as usize] != self.batch_no {
                    self.stamp[st.row as usize] = self.batch_no;
                    let max = values[row.clone()].iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                    let mut z = 0.0;
                    for (dst, v) in self.soft[row.clone()].iter_mut().zip(&values[row.clone()]) {
                        *dst = (v - max).exp();
                        z += *dst;
                    }
                    self.soft[row.clone()].iter_mut().for_each(|p| *p *= lr * alpha / z);
                }
                let td = values[idx] + lr * (y - values[idx]);
                for (v, p) in values[row.clone()].iter_mut().zip(&self.soft[row]) {
                    *v -= p;
                }
                values[idx] = td - self.soft[idx] + lr * alpha;
            } else {
                values[idx] += lr * (y - values[idx]);
            }
            q.visited[st.infoset as usize] = true;
        }
    }
}

/// One sequential Q-learning pass over `batch`:
/// `Q(s,a) += lr * (r + gamma * max_a' Q_target(s',a') - Q(s,a))`.
pub fn td_step(
    table: &InfosetTable,
    q: &mut QTable,
    target: &QTable,
    data: &PlayerDataset,
    batch: &[usize],
    gamma: f64,
    lr: f64,
) {
    Updater::new(table, data, None).apply(q, &target.values, batch, gamma, lr, 0.0)
}

/// [`td_step`] plus a gradient step on the conservative penalty
/// `logsumexp(Q(s, .)) - Q(s, a_data)` for every batch tuple: each legal
/// action loses `lr * alpha * softmax(Q(s, .))` and the data action gains
/// `lr * alpha`. As in minibatch gradient descent, the softmax is evaluated
/// at the Q-values the batch starts from.
#[allow(clippy::too_many_arguments)]
pub fn cql_step(
    table: &InfosetTable,
    q: &mut QTable,
    target: &QTable,
    data: &PlayerDataset,
    batch: &[usize],
    gamma: f64,
    lr: f64,
    alpha: f64,
) {
    Updater::new(table, data, None).apply(q, &target.values, batch, gamma, lr, alpha)
}

/// Deterministic argmax per infoset (lowest action on ties), restricted to
/// allowed actions where a mask constrains the infoset. Unvisited infosets
/// are uniform.
pub fn greedy_policy(table: &InfosetTable, q: &QTable, mask: Option<&ActionMask>) -> TabularPolicy {
    let mut probs = vec![0.0; table.num_sequences()];
    for (id, s) in table.iter() {
        let dst = &mut probs[s.offset..s.offset + s.num_actions];
        if !q.visited[id as usize] {
            dst.fill(1.0 / s.num_actions as f64);
            continue;
        }
        let row = q.row(table, id);
        let a = match mask.and_then(|m| m.row(table, id)) {
            Some(allowed) => {
                let masked: Vec<f64> =
                    row.iter().zip(allowed).map(|(v, ok)| if *ok { *v } else { f64::NEG_INFINITY }).collect();
                argmax_lowest(&masked)
            }
            None => argmax_lowest(row),
        };
        dst[a] = 1.0;
    }
    TabularPolicy::from_flat(table, q.player, probs).expect("one-hot rows")
}

/// Advantage-filtered behavior cloning:
/// `pi(a|s) ∝ count(s,a) * clip(exp(A(s,a) / beta), 1 / bound, bound)` with
/// `A(s,a) = Q(s,a) - sum_a' pi_bc(a'|s) Q(s,a')`. Infosets without data are
/// uniform.
pub fn crr_policy(table: &InfosetTable, q: &QTable, counts: &[f64], beta: f64, ratio_bound: f64) -> TabularPolicy {
    let mut mass = vec![0.0; table.num_sequences()];
    for (id, s) in table.iter() {
        let range = s.offset..s.offset + s.num_actions;
        let c = &counts[range.clone()];
        let total: f64 = c.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let row = q.row(table, id);
        let baseline: f64 = c.iter().zip(row).map(|(n, v)| n / total * v).sum();
        for a in 0..s.num_actions {
            let f = ((row[a] - baseline) / beta).exp().clamp(1.0 / ratio_bound, ratio_bound);
            mass[s.offset + a] = c[a] * f;
        }
    }
    normalize_rows(table, q.player, &mass)
}

/// Runs `cfg.steps` resample-and-update cycles starting from `warm_start`
/// and extracts the learner's policy. Returns the final Q-table for the next
/// warm start (unchanged for BC).
pub fn learn_best_response(
    table: &InfosetTable,
    wd: &WeightedPlayerDataset,
    warm_start: Option<QTable>,
    cfg: &LearnerConfig,
    rng: &mut impl Rng,
) -> Result<(TabularPolicy, QTable)> {
    let player = wd.data.player;
    let mut q = warm_start.unwrap_or_else(|| QTable::zeros(table, player));
    if cfg.algorithm == Algorithm::Bc {
        return Ok((learn_bc(table, wd)?, q));
    }
    let counts = weighted_counts(table, wd);
    let mask = (cfg.algorithm == Algorithm::Bcq).then(|| ActionMask::from_counts(table, &counts, cfg.bcq_threshold));
    let alpha = if cfg.algorithm == Algorithm::Cql { cfg.cql_alpha } else { 0.0 };
    let mut updater = Updater::new(table, &wd.data, mask.as_ref());
    let mut target = q.values.clone();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        if step % cfg.target_update_every == 0 {
            target.copy_from_slice(&q.values);
        }
        wd.resample_into(cfg.batch_size, rng, &mut batch)?;
        updater.apply(&mut q, &target, &batch, cfg.gamma, cfg.learning_rate, alpha);
    }
    let policy = match cfg.algorithm {
        Algorithm::Crr => crr_policy(table, &q, &counts, cfg.crr_beta, cfg.crr_ratio_bound),
        _ => greedy_policy(table, &q, mask.as_ref()),
    };
    Ok((policy, q))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::dataset::{dataset_from_counts, make_rps_d1_exact, project};
    use crate::game::GameSpec;
    use crate::tree::GameTree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rps_d1(player: Player) -> (GameTree, WeightedPlayerDataset) {
        let tree = GameTree::build(&GameSpec::Rps).unwrap();
        let d = make_rps_d1_exact().unwrap();
        let pd = Arc::new(project(&tree, &d, player).unwrap());
        (tree, WeightedPlayerDataset::uniform(pd))
    }

    #[test]
    fn bc_recovers_d1_policy() {
        let (tree, wd) = rps_d1(Player::Zero);
        let p = learn_bc(tree.infosets(Player::Zero), &wd).unwrap();
        assert_eq!(p.flat(), &[0.6, 0.2, 0.2]);
    }

    #[test]
    fn bc_on_paper_weights() {
        let (tree, wd) = rps_d1(Player::Zero);
        let weights = wd.data.tuples.iter().map(|t| if t.action == 1 { 1.0 } else { 1e-9 }).collect();
        let wd = WeightedPlayerDataset::new(wd.data.clone(), weights).unwrap();
        let p = learn_bc(tree.infosets(Player::Zero), &wd).unwrap();
        assert!(p.flat()[1] > 1.0 - 1e-8);
        let zero = WeightedPlayerDataset::new(wd.data.clone(), vec![0.0; wd.data.len()]).unwrap();
        assert!(matches!(learn_bc(tree.infosets(Player::Zero), &zero), Err(Error::DegenerateDataset)));
    }

    #[test]
    fn td_arithmetic() {
        let (tree, wd) = rps_d1(Player::Zero);
        let table = tree.infosets(Player::Zero);
        // Tuple 360 is the first (Paper, Rock) episode: reward 1.
        let i = wd.data.tuples.iter().position(|t| t.action == 1 && t.reward == 1.0).unwrap();
        let mut q = QTable::zeros(table, Player::Zero);
        let target = q.clone();
        td_step(table, &mut q, &target, &wd.data, &[i], 1.0, 0.1);
        assert_eq!(q.get(table, 0, 1), 0.1);
    }

    #[test]
    fn td_two_state_chain_converges() {
        // Kuhn, P0 holds K and passes, P1 bets, P0 calls and wins 2.
        let tree = GameTree::build(&GameSpec::Kuhn).unwrap();
        let table = tree.infosets(Player::Zero);
        let d = dataset_from_counts(&GameSpec::Kuhn, &[(vec![2, 0, 0, 1, 1], 1)]).unwrap();
        let pd = project(&tree, &d, Player::Zero).unwrap();
        let mut q = QTable::zeros(table, Player::Zero);
        for _ in 0..2000 {
            let target = q.clone();
            td_step(table, &mut q, &target, &pd, &[0, 1], 1.0, 0.05);
        }
        let s0 = table.lookup_str("0|K|").unwrap();
        let s1 = table.lookup_str("0|K|pb").unwrap();
        // Bellman: Q(s1, call) = 2; Q(s0, pass) = max Q(s1, .) = 2.
        assert!((q.get(table, s1, 1) - 2.0).abs() < 1e-9);
        assert!((q.get(table, s0, 0) - 2.0).abs() < 1e-9);
        // Zero TD error leaves the value unchanged.
        let before = q.clone();
        let target = q.clone();
        td_step(table, &mut q, &target, &pd, &[0], 1.0, 0.7);
        assert!((q.get(table, s0, 0) - before.get(table, s0, 0)).abs() < 1e-9);
    }

    #[test]
    fn cql_with_zero_alpha_is_td() {
        let (tree, wd) = rps_d1(Player::One);
        let table = tree.infosets(Player::One);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = QTable::zeros(table, Player::One);
        let mut b = a.clone();
        for _ in 0..20 {
            let batch = wd.resample_batch(64, &mut rng).unwrap();
            let (ta, tb) = (a.clone(), b.clone());
            td_step(table, &mut a, &ta, &wd.data, &batch, 1.0, 0.01);
            cql_step(table, &mut b, &tb, &wd.data, &batch, 1.0, 0.01, 0.0);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn cql_single_action_has_no_penalty() {
        // With one coin, player 0 bids it in round one and is left with the
        // single legal bid 0 in round two.
        let spec = GameSpec::OshiZumo(crate::game::OshiZumoParams { coins: 1, size: 2, horizon: 3 });
        let tree = GameTree::build(&spec).unwrap();
        let table = tree.infosets(Player::Zero);
        let d = dataset_from_counts(&spec, &[(vec![1, 0, 0, 1], 1)]).unwrap();
        let pd = project(&tree, &d, Player::Zero).unwrap();
        let i = pd.tuples.iter().position(|t| table.get(t.infoset).num_actions == 1).unwrap();
        let mut a = QTable::zeros(table, Player::Zero);
        let mut b = a.clone();
        let t = a.clone();
        td_step(table, &mut a, &t, &pd, &[i], 1.0, 0.1);
        cql_step(table, &mut b, &t, &pd, &[i], 1.0, 0.1, 5.0);
        let s = pd.tuples[i].infoset;
        assert!((a.get(table, s, 0) - b.get(table, s, 0)).abs() < 1e-15);
    }

    #[test]
    fn bcq_mask_examples() {
        assert_eq!(bcq_mask(&[0.6, 0.2, 0.2], 0.1), vec![true, true, true]);
        assert_eq!(bcq_mask(&[0.98, 0.02, 0.0], 0.1), vec![true, false, false]);
        assert_eq!(bcq_mask(&[0.5, 0.0, 0.5], 0.0), vec![true, false, true]);
        assert_eq!(bcq_mask(&[0.0, 0.0], 0.1), vec![false, false]);
    }

    #[test]
    fn greedy_examples() {
        let tree = GameTree::build(&GameSpec::Rps).unwrap();
        let table = tree.infosets(Player::Zero);
        let mut q = QTable::zeros(table, Player::Zero);
        assert_eq!(greedy_policy(table, &q, None).flat(), &[1.0 / 3.0; 3]);
        q.set(table, 0, 1, 1.0);
        assert_eq!(greedy_policy(table, &q, None).flat(), &[0.0, 1.0, 0.0]);
        q.set(table, 0, 0, 1.0);
        assert_eq!(greedy_policy(table, &q, None).flat(), &[1.0, 0.0, 0.0]);
        let mask = ActionMask::from_counts(table, &[0.0, 1.0, 0.0], 0.1);
        assert_eq!(greedy_policy(table, &q, Some(&mask)).flat(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn crr_limits() {
        let (tree, wd) = rps_d1(Player::Zero);
        let table = tree.infosets(Player::Zero);
        let counts = weighted_counts(table, &wd);
        let mut q = QTable::zeros(table, Player::Zero);
        q.set(table, 0, 0, 0.0);
        let bc = learn_bc(table, &wd).unwrap();
        assert_eq!(crr_policy(table, &q, &counts, 1.0, 20.0), bc);
        q.set(table, 0, 1, 0.7);
        q.set(table, 0, 2, -0.3);
        let clipped = crr_policy(table, &q, &counts, 1.0, 1.0);
        for (x, y) in clipped.flat().iter().zip(bc.flat()) {
            assert!((x - y).abs() < 1e-15);
        }
        let sharp = crr_policy(table, &q, &counts, 1e-6, 1e6);
        assert!(sharp.flat()[1] > 0.999);
        let capped = crr_policy(table, &q, &counts, 1e-6, 20.0);
        // Paper gets 0.2 * 20 against 0.6 / 20 and 0.2 / 20.
        assert!((capped.flat()[1] - 4.0 / (4.0 + 0.03 + 0.01)).abs() < 1e-12);
    }

    #[test]
    fn crr_support_within_data() {
        let tree = GameTree::build(&GameSpec::Rps).unwrap();
        let table = tree.infosets(Player::Zero);
        let d = dataset_from_counts(&GameSpec::Rps, &[(vec![0, 2], 5), (vec![2, 0], 5)]).unwrap();
        let wd = WeightedPlayerDataset::uniform(Arc::new(project(&tree, &d, Player::Zero).unwrap()));
        let cfg = LearnerConfig { algorithm: Algorithm::Crr, steps: 50, batch_size: 16, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, _) = learn_best_response(table, &wd, None, &cfg, &mut rng).unwrap();
        assert_eq!(p.flat()[1], 0.0);
        assert!(p.flat()[0] > p.flat()[2]);
    }

    #[test]
    fn q_learning_finds_paper() {
        let (tree, wd) = rps_d1(Player::Zero);
        let table = tree.infosets(Player::Zero);
        let cfg = LearnerConfig { algorithm: Algorithm::Qlearning, steps: 2000, learning_rate: 1e-2, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, q) = learn_best_response(table, &wd, None, &cfg, &mut rng).unwrap();
        assert_eq!(p.flat(), &[0.0, 1.0, 0.0]);
        // Against (0.6, 0.2, 0.2): R 0, P 0.4, S -0.4.
        let row = q.row(table, 0);
        assert!(row[1] > row[0] && row[0] > row[2], "{row:?}");
    }

    /// Stationary point of the expected CQL update for a single-state game:
    /// `mu(a) (r(a) - Q(a)) - alpha softmax(Q)(a) + alpha mu(a) = 0`.
    fn cql_fixed_point(r: &[f64], mu: &[f64], alpha: f64) -> Vec<f64> {
        let mut q = r.to_vec();
        for _ in 0..200_000 {
            let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = q.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for a in 0..q.len() {
                q[a] += 1e-3 * (mu[a] * (r[a] - q[a]) - alpha * e[a] / z + alpha * mu[a]);
            }
        }
        q
    }

    #[test]
    fn cql_matches_its_fixed_point() {
        let (tree, wd) = rps_d1(Player::Zero);
        let table = tree.infosets(Player::Zero);
        let r = [0.0, 0.4, -0.4];
        let mu = [0.6, 0.2, 0.2];
        for (alpha, best) in [(0.1, 1), (2.0, 0)] {
            let oracle = cql_fixed_point(&r, &mu, alpha);
            assert_eq!(argmax_lowest(&oracle), best);
            let cfg = LearnerConfig { algorithm: Algorithm::Cql, cql_alpha: alpha, steps: 2000, learning_rate: 1e-3, ..Default::default() };
            let (p, q) = learn_best_response(table, &wd, None, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert_eq!(p.flat()[best], 1.0, "alpha {alpha}: {:?} vs {oracle:?}", q.row(table, 0));
            for (x, y) in q.row(table, 0).iter().zip(&oracle) {
                assert!((x - y).abs() < 0.05, "alpha {alpha}: {:?} vs {oracle:?}", q.row(table, 0));
            }
        }
    }

    #[test]
    fn zero_steps_returns_greedy_warm_start() {
        let (tree, wd) = rps_d1(Player::Zero);
        let table = tree.infosets(Player::Zero);
        let mut warm = QTable::zeros(table, Player::Zero);
        warm.set(table, 0, 2, 0.5);
        let cfg = LearnerConfig { steps: 0, ..Default::default() };
        let (p, q) = learn_best_response(table, &wd, Some(warm.clone()), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p, greedy_policy(table, &warm, None));
        assert_eq!(q, warm);
    }

    #[test]
    fn learning_is_deterministic() {
        let (tree, wd) = rps_d1(Player::One);
        let table = tree.infosets(Player::One);
        for algorithm in Algorithm::ALL {
            let cfg = LearnerConfig { algorithm, steps: 30, ..Default::default() };
            let a = learn_best_response(table, &wd, None, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = learn_best_response(table, &wd, None, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b, "{algorithm}");
        }
    }

    #[test]
    fn config_validation_and_parsing() {
        LearnerConfig::default().validate().unwrap();
        assert!(LearnerConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(LearnerConfig { crr_ratio_bound: 0.5, ..Default::default() }.validate().is_err());
        assert_eq!(Algorithm::parse("bcq").unwrap(), Algorithm::Bcq);
        assert!(Algorithm::parse("dqn").is_err());
        assert_eq!(LearnerConfig::for_game("leduc", "mix:0").cql_alpha, 2.0);
        assert_eq!(LearnerConfig::for_game("leduc", "population:10").cql_alpha, 0.5);
        let cfg: LearnerConfig = serde_json::from_str(r#"{"algorithm":"crr","steps":5}"#).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Crr);
        assert!(serde_json::from_str::<LearnerConfig>(r#"{"stepz":5}"#).is_err());
    }

    #[test]
    fn qtable_csv_quotes_keys() {
        let spec = GameSpec::OshiZumo(Default::default());
        let tree = GameTree::build(&spec).unwrap();
        let table = tree.infosets(Player::Zero);
        let mut q = QTable::zeros(table, Player::Zero);
        let id = table.iter().find(|(_, s)| s.key.as_str().contains(',')).unwrap().0;
        q.set(table, id, 0, 1.5);
        let mut buf = Vec::new();
        q.write_csv(table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"0|"));
        assert!(text.contains(",0,1.5"));
    }
}
