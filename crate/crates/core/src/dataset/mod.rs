//! Offline datasets of full-game trajectories.

mod coverage;
mod io;
mod project;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Action, Actor, GameSpec, InfoKey, NodeKind, Player};
use crate::policy::{BehaviorPolicy, Fallback, StrategyProfile, TabularPolicy, TabularProfile};
use crate::solver::{policy_probs, sample_index};
use crate::tree::{GameTree, TreeNode};

pub use coverage::{coverage_report, CoverageReport};
pub use io::{load, load_from_reader, save, save_to_writer, FORMAT_VERSION};
pub use project::{project, PlayerDataset, PlayerTrajectory, PlayerTuple};

/// One step of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub actor: Actor,
    /// Actor's infostate key; decision events only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<InfoKey>,
    pub action: Action,
    /// Outcome probability; chance events only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance_prob: Option<f64>,
}

/// A complete episode: every decision and chance outcome, then the payoffs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensiveTrajectory {
    pub events: Vec<Event>,
    pub returns: [f64; 2],
}

impl ExtensiveTrajectory {
    pub fn history(&self) -> Vec<u8> {
        self.events.iter().map(|e| e.action as u8).collect()
    }

    /// Builds the event record of a history by replaying it.
    pub fn from_history(spec: &GameSpec, history: &[u8]) -> Result<Self> {
        let mut state = spec.initial_state();
        let mut events = Vec::with_capacity(history.len());
        for &a in history {
            let a = a as Action;
            events.push(match state.node() {
                NodeKind::Chance(p) => Event {
                    actor: Actor::Chance,
                    key: None,
                    action: a,
                    chance_prob: Some(*p.get(a).ok_or(Error::IllegalAction { key: "chance".into(), action: a })?),
                },
                &NodeKind::Decision { player, .. } => Event {
                    actor: Actor::Player(player),
                    key: Some(spec.infostate_key(&state, player)),
                    action: a,
                    chance_prob: None,
                },
                NodeKind::Terminal(_) => return Err(Error::TerminalState),
            });
            state = spec.apply(&state, a)?;
        }
        let returns = state.returns().ok_or_else(|| Error::InvalidTrajectory {
            index: 0,
            reason: "history does not end at a terminal".into(),
        })?;
        Ok(ExtensiveTrajectory { events, returns })
    }

    /// Checks the record against the rules: actors, keys, chance
    /// probabilities and terminal returns must all replay exactly.
    pub fn validate(&self, spec: &GameSpec, index: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidTrajectory { index, reason };
        let mut state = spec.initial_state();
        for (i, e) in self.events.iter().enumerate() {
            let actor = spec.current_player(&state).map_err(|_| bad(format!("event {i} after terminal")))?;
            if actor != e.actor {
                return Err(bad(format!("event {i}: expected {actor:?}, recorded {:?}", e.actor)));
            }
            match actor {
                Actor::Chance => {
                    let probs = spec.chance_outcomes(&state).map_err(|err| bad(err.to_string()))?;
                    let p = probs.get(e.action).map(|x| x.1);
                    if p.is_none() || e.chance_prob != p {
                        return Err(bad(format!("event {i}: chance outcome/probability mismatch")));
                    }
                }
                Actor::Player(p) => {
                    let key = spec.infostate_key(&state, p);
                    if e.key.as_ref() != Some(&key) {
                        return Err(bad(format!("event {i}: key {:?} but state has `{key}`", e.key)));
                    }
                }
            }
            state = spec.apply(&state, e.action).map_err(|err| bad(format!("event {i}: {err}")))?;
        }
        match state.returns() {
            Some(r) if r == self.returns => Ok(()),
            Some(r) => Err(bad(format!("recorded returns {:?}, replay gives {r:?}", self.returns))),
            None => Err(bad("trajectory stops before a terminal".into())),
        }
    }

    /// Decision events of `player`, as `(event index, key, action)`.
    pub fn decisions(&self, player: Player) -> impl Iterator<Item = (usize, &InfoKey, Action)> {
        self.events.iter().enumerate().filter_map(move |(i, e)| match (&e.actor, &e.key) {
            (Actor::Player(p), Some(k)) if *p == player => Some((i, k, e.action)),
            _ => None,
        })
    }
}

/// Where a dataset came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub recipe: String,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Recipe-specific facts, e.g. the number of expert episodes.
    #[serde(default)]
    pub details: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameDataset {
    pub game: GameSpec,
    pub trajectories: Vec<ExtensiveTrajectory>,
    pub provenance: Provenance,
}

impl GameDataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectories.iter().enumerate().try_for_each(|(i, t)| t.validate(&self.game, i))
    }
}

/// Reproducible per-trajectory random stream.
fn episode_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Plays one episode; seats may use different profiles.
fn sample_episode(spec: &GameSpec, seats: [&BehaviorPolicy; 2], rng: &mut impl Rng) -> Result<ExtensiveTrajectory> {
    let mut state = spec.initial_state();
    let mut events = Vec::new();
    loop {
        let event = match state.node() {
            NodeKind::Terminal(r) => return Ok(ExtensiveTrajectory { events, returns: *r }),
            NodeKind::Chance(p) => {
                let a = sample_index(p, rng);
                Event { actor: Actor::Chance, key: None, action: a, chance_prob: Some(p[a]) }
            }
            &NodeKind::Decision { player, num_actions } => {
                let key = spec.infostate_key(&state, player);
                let probs = policy_probs(seats[player.index()], &key, num_actions, Fallback::Uniform)?;
                let a = sample_index(&probs, rng);
                Event { actor: Actor::Player(player), key: Some(key), action: a, chance_prob: None }
            }
        };
        state = spec.apply(&state, event.action)?;
        events.push(event);
    }
}

/// `n` i.i.d. episodes under `profile` (uniform where the profile has no entry).
pub fn sample_dataset(spec: &GameSpec, profile: &StrategyProfile, n: usize, seed: u64) -> Result<GameDataset> {
    let seats = [&profile.players[0], &profile.players[1]];
    let trajectories = (0..n)
        .map(|i| sample_episode(spec, seats, &mut episode_rng(seed, i)))
        .collect::<Result<_>>()?;
    Ok(GameDataset {
        game: spec.clone(),
        trajectories,
        provenance: Provenance { recipe: "sample".into(), seed: Some(seed), details: BTreeMap::new() },
    })
}

/// Each episode is played entirely by `expert` with probability
/// `expert_ratio`, otherwise by `random`.
pub fn sample_mix_dataset(
    spec: &GameSpec,
    expert: &StrategyProfile,
    random: &StrategyProfile,
    expert_ratio: f64,
    n: usize,
    seed: u64,
) -> Result<GameDataset> {
    if !(0.0..=1.0).contains(&expert_ratio) {
        return Err(Error::Config(format!("expert ratio {expert_ratio} outside [0, 1]")));
    }
    let mut expert_episodes = 0usize;
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = episode_rng(seed, i);
        let use_expert = rng.gen::<f64>() < expert_ratio;
        let prof = if use_expert { expert } else { random };
        expert_episodes += use_expert as usize;
        trajectories.push(sample_episode(spec, [&prof.players[0], &prof.players[1]], &mut rng)?);
    }
    let mut details = BTreeMap::new();
    details.insert("expert_ratio".into(), serde_json::json!(expert_ratio));
    details.insert("expert_episodes".into(), serde_json::json!(expert_episodes));
    Ok(GameDataset {
        game: spec.clone(),
        trajectories,
        provenance: Provenance { recipe: format!("mix:{expert_ratio}"), seed: Some(seed), details },
    })
}

/// Each seat independently draws a member of `population` per episode.
pub fn sample_population_dataset(
    spec: &GameSpec,
    population: &[StrategyProfile],
    n: usize,
    seed: u64,
) -> Result<GameDataset> {
    if population.is_empty() {
        return Err(Error::Config("population is empty".into()));
    }
    let mut trajectories = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = episode_rng(seed, i);
        let a = rng.gen_range(0..population.len());
        let b = rng.gen_range(0..population.len());
        let seats = [&population[a].players[0], &population[b].players[1]];
        trajectories.push(sample_episode(spec, seats, &mut rng)?);
    }
    let mut details = BTreeMap::new();
    details.insert("population_size".into(), serde_json::json!(population.len()));
    Ok(GameDataset {
        game: spec.clone(),
        trajectories,
        provenance: Provenance { recipe: format!("population:{}", population.len()), seed: Some(seed), details },
    })
}

/// Rounds `weights * n` to integers summing to `n` by the largest-remainder
/// method (ties to the lower index). Weights must sum to one.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| (s + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |i: usize| scaled[i] - counts[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Dataset whose trajectory frequencies equal their probabilities under
/// `profile`, rounded to `n` trajectories by largest remainder. When every
/// `prob * n` is an integer the result is exactly real-equivalent.
pub fn exact_proportion_dataset(tree: &GameTree, profile: &TabularProfile, n: usize) -> Result<GameDataset> {
    let mut leaves: Vec<(Vec<u8>, f64)> = Vec::new();
    let mut stack = vec![(tree.root(), Vec::<u8>::new(), 1.0f64)];
    while let Some((id, hist, p)) = stack.pop() {
        match tree.node(id) {
            TreeNode::Terminal { .. } => {
                if p > 0.0 {
                    leaves.push((hist, p));
                }
            }
            TreeNode::Chance { .. } => {
                for (a, e) in tree.children(id).iter().enumerate().rev() {
                    let mut h = hist.clone();
                    h.push(a as u8);
                    stack.push((e.child, h, p * e.prob));
                }
            }
            &TreeNode::Decision { player, infoset, .. } => {
                let probs = profile[player.index()].at(tree.infosets(player), infoset);
                for (a, e) in tree.children(id).iter().enumerate().rev() {
                    let mut h = hist.clone();
                    h.push(a as u8);
                    stack.push((e.child, h, p * probs[a]));
                }
            }
        }
    }
    let weights: Vec<f64> = leaves.iter().map(|l| l.1).collect();
    let counts = largest_remainder(&weights, n);
    let cells: Vec<(Vec<u8>, usize)> = leaves.into_iter().map(|l| l.0).zip(counts).collect();
    let mut d = dataset_from_counts(tree.spec(), &cells)?;
    d.provenance.recipe = "exact".into();
    Ok(d)
}

/// Dataset with each history repeated `count` times.
pub fn dataset_from_counts(spec: &GameSpec, cells: &[(Vec<u8>, usize)]) -> Result<GameDataset> {
    let mut trajectories = Vec::new();
    for (h, count) in cells {
        let t = ExtensiveTrajectory::from_history(spec, h)?;
        trajectories.extend(std::iter::repeat_n(t, *count));
    }
    Ok(GameDataset { game: spec.clone(), trajectories, provenance: Provenance::default() })
}

/// Skewed RPS behavior used by both D1 recipes.
pub const RPS_D1_POLICY: [f64; 3] = [0.6, 0.2, 0.2];
pub const RPS_DATASET_SIZE: usize = 1000;

/// RPS D1 sampled from the skewed behavior policy.
pub fn make_rps_d1(seed: u64) -> Result<GameDataset> {
    let tree = GameTree::build(&GameSpec::Rps)?;
    let profile = StrategyProfile::symmetric_single(&tree, &RPS_D1_POLICY)?;
    let mut d = sample_dataset(&GameSpec::Rps, &profile, RPS_DATASET_SIZE, seed)?;
    d.provenance.recipe = "d1".into();
    Ok(d)
}

/// RPS D1 with exactly the joint proportions of the skewed behavior policy.
pub fn make_rps_d1_exact() -> Result<GameDataset> {
    let tree = GameTree::build(&GameSpec::Rps)?;
    let pol = |p| TabularPolicy::from_flat(tree.infosets(p), p, RPS_D1_POLICY.to_vec());
    let profile = [pol(Player::Zero)?, pol(Player::One)?];
    let mut d = exact_proportion_dataset(&tree, &profile, RPS_DATASET_SIZE)?;
    d.provenance.recipe = "d1-exact".into();
    Ok(d)
}

/// Joint densities of the partially covered asymmetric-RPS dataset, rows
/// indexed by player 0's action (R, P, S) and columns by player 1's
/// (R, P, S, Rock2). Rock2 is only ever observed against Scissors.
pub const RPS_D2_DENSITY: [[f64; 4]; 3] = [
    [0.1, 0.1, 0.1, 0.0],
    [0.1, 0.1, 0.1, 0.0],
    [0.1, 0.1, 0.1, 0.1],
];

/// The partially covered asymmetric-RPS dataset, built with exact counts.
/// The seed is recorded but the construction is deterministic.
pub fn make_rps_d2(seed: u64) -> Result<GameDataset> {
    let mut hist = Vec::new();
    let mut weights = Vec::new();
    for (a0, row) in RPS_D2_DENSITY.iter().enumerate() {
        for (a1, w) in row.iter().enumerate() {
            hist.push(vec![a0 as u8, a1 as u8]);
            weights.push(*w);
        }
    }
    let counts = largest_remainder(&weights, RPS_DATASET_SIZE);
    let cells: Vec<_> = hist.into_iter().zip(counts).filter(|c| c.1 > 0).collect();
    let mut d = dataset_from_counts(&GameSpec::RpsAsym, &cells)?;
    d.provenance = Provenance { recipe: "d2".into(), seed: Some(seed), details: BTreeMap::new() };
    Ok(d)
}

/// Per-player visit counts of `(infostate, action)` pairs.
#[derive(Clone, Debug)]
pub struct ActionCounts {
    pub player: Player,
    pub counts: Vec<f64>,
}

impl ActionCounts {
    pub fn from_dataset(tree: &GameTree, d: &GameDataset, player: Player) -> Result<Self> {
        let table = tree.infosets(player);
        let mut counts = vec![0.0; table.num_sequences()];
        for (i, t) in d.trajectories.iter().enumerate() {
            for (_, key, a) in t.decisions(player) {
                let id = table.lookup(key).ok_or_else(|| Error::InvalidTrajectory {
                    index: i,
                    reason: format!("unknown infostate `{key}`"),
                })?;
                counts[table.seq(id, a)] += 1.0;
            }
        }
        Ok(ActionCounts { player, counts })
    }

    /// `count(s, a) / count(s)`; unvisited infosets are uniform.
    pub fn to_policy(&self, tree: &GameTree) -> TabularPolicy {
        let table = tree.infosets(self.player);
        let mut probs = vec![0.0; table.num_sequences()];
        for (_, s) in table.iter() {
            let slice = &self.counts[s.offset..s.offset + s.num_actions];
            let total: f64 = slice.iter().sum();
            for a in 0..s.num_actions {
                probs[s.offset + a] = if total > 0.0 { slice[a] / total } else { 1.0 / s.num_actions as f64 };
            }
        }
        TabularPolicy::from_flat(table, self.player, probs).expect("counts normalize to distributions")
    }

    pub fn visited(&self, tree: &GameTree, infoset: u32) -> bool {
        let s = tree.infosets(self.player).get(infoset);
        self.counts[s.offset..s.offset + s.num_actions].iter().any(|c| *c > 0.0)
    }
}

/// Counting estimator of the behavior policy. Infostates that never occur in
/// the dataset are absent from the result.
pub fn empirical_behavior_policy(tree: &GameTree, d: &GameDataset) -> Result<StrategyProfile> {
    let mut out = StrategyProfile::default();
    for p in Player::BOTH {
        let counts = ActionCounts::from_dataset(tree, d, p)?;
        let table = tree.infosets(p);
        for (id, s) in table.iter() {
            let slice = &counts.counts[s.offset..s.offset + s.num_actions];
            let total: f64 = slice.iter().sum();
            if total > 0.0 && counts.visited(tree, id) {
                out.players[p.index()].insert(s.key.clone(), slice.iter().map(|c| c / total).collect())?;
            }
        }
    }
    Ok(out)
}

/// Dense counting estimator for both players (uniform at unvisited infosets).
pub fn empirical_tabular(tree: &GameTree, d: &GameDataset) -> Result<TabularProfile> {
    Ok([
        ActionCounts::from_dataset(tree, d, Player::Zero)?.to_policy(tree),
        ActionCounts::from_dataset(tree, d, Player::One)?.to_policy(tree),
    ])
}
