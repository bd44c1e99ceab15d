//! The offline self-play loop: reweight the dataset against each player's
//! current opponent average, learn a best response offline, and fold it into
//! a sequence-form average policy.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{empirical_tabular, project, GameDataset};
use crate::error::{Error, Result};
use crate::game::Player;
use crate::offline_rl::{learn_best_response, Algorithm, LearnerConfig, QTable};
use crate::policy::{behavior_profile, SequenceForm, StrategyProfile, TabularPolicy, TabularProfile};
use crate::reweight::{Reweighter, WeightedPlayerDataset};
use crate::solver::{expected_value, nash_conv, NashConvReport};
use crate::tree::{GameTree, InfosetTable};

/// Weight on the best response at an infoset when averaging in behavioral
/// form: `alpha * x_br / ((1 - alpha) * x_prev + alpha * x_br)`, falling back
/// to `alpha` where neither policy reaches the infoset.
pub fn lambda_mix(alpha: f64, x_prev: f64, x_br: f64) -> f64 {
    let denom = (1.0 - alpha) * x_prev + alpha * x_br;
    if denom > 0.0 {
        alpha * x_br / denom
    } else {
        alpha
    }
}

/// Per-player sequence-form values `x(s) pi(a|s)` of the running average
/// policy, after `iteration` best responses.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragePolicyStore {
    pub iteration: usize,
    pub players: [SequenceForm; 2],
}

impl AveragePolicyStore {
    /// Store of a single profile at iteration 0.
    pub fn from_profile(tree: &GameTree, profile: &TabularProfile) -> Self {
        AveragePolicyStore {
            iteration: 0,
            players: Player::BOTH.map(|p| SequenceForm::from_policy(tree.infosets(p), &profile[p.index()])),
        }
    }

    /// Folds in both players' iteration-`k` best responses, with `k = iteration + 1`.
    pub fn update(&mut self, tree: &GameTree, brs: &[TabularPolicy; 2]) {
        let k = self.iteration + 1;
        for p in Player::BOTH {
            update_average_policy(tree.infosets(p), &mut self.players[p.index()], &brs[p.index()], k);
        }
        self.iteration = k;
    }

    /// Normalized behavior policies; zero-mass infosets are uniform.
    pub fn behavior(&self, tree: &GameTree) -> TabularProfile {
        Player::BOTH.map(|p| self.players[p.index()].to_policy(tree.infosets(p)))
    }
}

/// `stored <- (k - 1)/k * stored + 1/k * x_br * br`.
pub fn update_average_policy(table: &InfosetTable, stored: &mut SequenceForm, br: &TabularPolicy, k: usize) {
    assert!(k >= 1, "iterations are numbered from 1");
    let x = SequenceForm::from_policy(table, br);
    let keep = (k - 1) as f64 / k as f64;
    let add = 1.0 / k as f64;
    for (v, b) in stored.flat_mut().iter_mut().zip(x.flat()) {
        *v = keep * *v + add * b;
    }
}

pub fn behavior_from_store(tree: &GameTree, store: &AveragePolicyStore) -> StrategyProfile {
    behavior_profile(tree, &store.behavior(tree))
}

/// Exact NashConv of the store's behavior profile.
pub fn evaluate_aggregate(tree: &GameTree, store: &AveragePolicyStore) -> NashConvReport {
    nash_conv(tree, &store.behavior(tree))
}

/// One member of a policy collection.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedPolicy {
    /// 0 for the initial empirical behavior policy.
    pub iteration: usize,
    /// `None` for the initial policy.
    pub algorithm: Option<Algorithm>,
    pub policy: TabularPolicy,
}

/// All policies a run produced, with their weights in the average.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyCollection {
    pub entries: [Vec<LearnedPolicy>; 2],
    pub weights: [Vec<f64>; 2],
}

impl PolicyCollection {
    pub fn new(initial: &TabularProfile) -> Self {
        PolicyCollection {
            entries: Player::BOTH.map(|p| {
                vec![LearnedPolicy { iteration: 0, algorithm: None, policy: initial[p.index()].clone() }]
            }),
            weights: [vec![1.0], vec![1.0]],
        }
    }

    /// Appends iteration-`k` policies under the `1/k` schedule.
    pub fn push(&mut self, k: usize, algorithm: Algorithm, brs: &[TabularPolicy; 2]) {
        let alpha = 1.0 / k as f64;
        for p in Player::BOTH {
            let w = &mut self.weights[p.index()];
            w.iter_mut().for_each(|x| *x *= 1.0 - alpha);
            w.push(alpha);
            self.entries[p.index()].push(LearnedPolicy {
                iteration: k,
                algorithm: Some(algorithm),
                policy: brs[p.index()].clone(),
            });
        }
    }

    pub fn len(&self) -> usize {
        self.entries[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries[0].is_empty()
    }
}

/// Keeps entries whose iteration is a multiple of `every`, plus the last,
/// and renormalizes their weights.
pub fn checkpoint_collection(c: &PolicyCollection, every: usize) -> Result<PolicyCollection> {
    if every == 0 {
        return Err(Error::Config("checkpoint interval must be at least 1".into()));
    }
    let mut out = PolicyCollection { entries: [Vec::new(), Vec::new()], weights: [Vec::new(), Vec::new()] };
    for p in 0..2 {
        let last = c.entries[p].len().saturating_sub(1);
        for (i, (e, w)) in c.entries[p].iter().zip(&c.weights[p]).enumerate() {
            if e.iteration % every == 0 || i == last {
                out.entries[p].push(e.clone());
                out.weights[p].push(*w);
            }
        }
        let total: f64 = out.weights[p].iter().sum();
        if total > 0.0 && out.entries[p].len() < c.entries[p].len() {
            out.weights[p].iter_mut().for_each(|w| *w /= total);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffFspConfig {
    pub iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub learner: LearnerConfig,
    /// Run the two players' reweight-and-learn phases on separate threads.
    pub parallel: bool,
    /// Keep every best response in the returned collection.
    pub keep_policies: bool,
}

impl Default for OffFspConfig {
    fn default() -> Self {
        OffFspConfig {
            iterations: 100,
            eval_every: 10,
            seed: 0,
            learner: LearnerConfig::default(),
            parallel: true,
            keep_policies: true,
        }
    }
}

impl OffFspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        self.learner.validate()
    }
}

/// Evaluation of the average profile after `iteration` best responses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub nash_conv: f64,
    pub gain: [f64; 2],
    /// Exact value of each learned best response against the opponent
    /// average it was trained on; `None` for the initial record.
    pub br_value: Option<[f64; 2]>,
}

/// Time spent per phase, summed over players.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub reweight: Duration,
    pub learn: Duration,
    pub eval: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.reweight + self.learn + self.eval
    }

    fn add(&mut self, other: &PhaseTimes) {
        self.reweight += other.reweight;
        self.learn += other.learn;
        self.eval += other.eval;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub config: OffFspConfig,
    pub records: Vec<IterationRecord>,
    /// Per-iteration phase times, index 0 being iteration 1.
    pub timings: Vec<PhaseTimes>,
}

impl RunReport {
    pub fn final_nash_conv(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.nash_conv)
    }

    pub fn total_time(&self) -> PhaseTimes {
        let mut t = PhaseTimes::default();
        self.timings.iter().for_each(|x| t.add(x));
        t
    }

    /// Evaluation records; contains no timing, so equal seeds give equal bytes.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "iteration,nashconv,gain_p0,gain_p1,br_value_p0,br_value_p1")?;
        for r in &self.records {
            let (b0, b1) = r.br_value.map_or((String::new(), String::new()), |b| (b[0].to_string(), b[1].to_string()));
            writeln!(w, "{},{},{},{},{b0},{b1}", r.iteration, r.nash_conv, r.gain[0], r.gain[1])?;
        }
        Ok(())
    }

    pub fn write_timing_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "iteration,t_reweight_ms,t_learn_ms,t_eval_ms,t_total_ms")?;
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        for (i, t) in self.timings.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, ms(t.reweight), ms(t.learn), ms(t.eval), ms(t.total()))?;
        }
        Ok(())
    }
}

pub struct OffFspRun {
    pub collection: PolicyCollection,
    pub store: AveragePolicyStore,
    pub report: RunReport,
}

/// Random stream of player `player` at iteration `k`.
fn learner_rng(seed: u64, k: usize, player: Player) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((2 * k + player.index()) as u64);
    rng
}

struct PlayerState {
    reweighter: Reweighter,
    q: Option<QTable>,
}

fn player_step(
    tree: &GameTree,
    state: &mut PlayerState,
    opponent_store: &SequenceForm,
    cfg: &OffFspConfig,
    k: usize,
    player: Player,
) -> Result<(TabularPolicy, PhaseTimes)> {
    let wrap = |e: Error| Error::Iteration { iteration: k, player: player.index(), source: Box::new(e) };
    let mut times = PhaseTimes::default();
    let start = Instant::now();
    let wd = state.reweighter.weigh(opponent_store, cfg.learner.weight_cap).map_err(wrap)?;
    times.reweight = start.elapsed();
    let start = Instant::now();
    let mut rng = learner_rng(cfg.seed, k, player);
    let (br, q) = learn_best_response(tree.infosets(player), &wd, state.q.take(), &cfg.learner, &mut rng).map_err(wrap)?;
    state.q = Some(q);
    times.learn = start.elapsed();
    Ok((br, times))
}

/// Off-FSP from a fixed dataset. Both players are updated simultaneously
/// against the previous iteration's averages.
pub fn run_off_fsp(tree: &GameTree, d: &GameDataset, cfg: &OffFspConfig) -> Result<OffFspRun> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::Config("dataset is empty".into()));
    }
    if d.game != *tree.spec() {
        return Err(Error::GameMismatch { expected: tree.spec().name().into(), found: d.game.name().into() });
    }
    let behavior = empirical_tabular(tree, d)?;
    let mut store = AveragePolicyStore::from_profile(tree, &behavior);
    let mut collection = PolicyCollection::new(&behavior);
    let mut states = Vec::with_capacity(2);
    for p in Player::BOTH {
        let data = Arc::new(project(tree, d, p)?);
        let reweighter = Reweighter::new(tree, data, &behavior[p.opponent().index()])?;
        states.push(PlayerState { reweighter, q: None });
    }
    let [mut s0, mut s1]: [PlayerState; 2] = states.try_into().unwrap_or_else(|_| unreachable!());

    let initial = evaluate_aggregate(tree, &store);
    let mut records = vec![IterationRecord {
        iteration: 0,
        nash_conv: initial.total,
        gain: initial.per_player_gain,
        br_value: None,
    }];
    let mut timings = Vec::with_capacity(cfg.iterations);
    for k in 1..=cfg.iterations {
        let (r0, r1) = if cfg.parallel {
            let (st0, st1) = (&store.players[1], &store.players[0]);
            std::thread::scope(|scope| {
                let h = scope.spawn(|| player_step(tree, &mut s1, st1, cfg, k, Player::One));
                let r0 = player_step(tree, &mut s0, st0, cfg, k, Player::Zero);
                (r0, h.join().expect("learner thread panicked"))
            })
        } else {
            (
                player_step(tree, &mut s0, &store.players[1], cfg, k, Player::Zero),
                player_step(tree, &mut s1, &store.players[0], cfg, k, Player::One),
            )
        };
        let ((b0, t0), (b1, t1)) = (r0?, r1?);
        let mut times = t0;
        times.add(&t1);
        let brs = [b0, b1];

        let evaluate = k % cfg.eval_every == 0 || k == cfg.iterations;
        let start = Instant::now();
        let br_value = evaluate.then(|| {
            let prev = store.behavior(tree);
            [
                expected_value(tree, &[brs[0].clone(), prev[1].clone()])[0],
                expected_value(tree, &[prev[0].clone(), brs[1].clone()])[1],
            ]
        });
        store.update(tree, &brs);
        if evaluate {
            let r = evaluate_aggregate(tree, &store);
            records.push(IterationRecord { iteration: k, nash_conv: r.total, gain: r.per_player_gain, br_value });
        }
        times.eval = start.elapsed();
        if cfg.keep_policies {
            collection.push(k, cfg.learner.algorithm, &brs);
        }
        timings.push(times);
    }
    Ok(OffFspRun { collection, store, report: RunReport { config: cfg.clone(), records, timings } })
}

/// Single-agent offline RL: each player learns once against the unweighted
/// dataset (no self-play). With `bc` this is the empirical behavior policy.
pub fn single_agent_baseline(tree: &GameTree, d: &GameDataset, learner: &LearnerConfig, seed: u64) -> Result<TabularProfile> {
    learner.validate()?;
    let mut out = Vec::with_capacity(2);
    for p in Player::BOTH {
        let wd = WeightedPlayerDataset::uniform(Arc::new(project(tree, d, p)?));
        let mut rng = learner_rng(seed, 0, p);
        out.push(learn_best_response(tree.infosets(p), &wd, None, learner, &mut rng)?.0);
    }
    let [a, b]: [TabularPolicy; 2] = out.try_into().unwrap_or_else(|_| unreachable!());
    Ok([a, b])
}
