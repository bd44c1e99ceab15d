//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use offsp_core::dataset::{
    empirical_tabular, exact_proportion_dataset, make_rps_d1_exact, make_rps_d2, project, sample_mix_dataset,
    ExtensiveTrajectory, GameDataset, PlayerDataset, Provenance,
};
use offsp_core::game::GAME_NAMES;
use offsp_core::off_fsp::{
    behavior_from_store, run_off_fsp, single_agent_baseline, AveragePolicyStore, OffFspConfig,
};
use offsp_core::offline_rl::{
    bcq_mask, crr_policy, cql_step, learn_bc, learn_best_response, td_step, weighted_counts, ActionMask, Algorithm,
    LearnerConfig, QTable,
};
use offsp_core::policy::{behavior_profile, realization_plan, uniform_profile};
use offsp_core::reweight::{generate_data, WeightedPlayerDataset};
use offsp_core::solver::{fp_solve, mix_behavior, monte_carlo_value, nash_conv};
use offsp_core::tree::TreeNode;
use offsp_core::{make_game, Fallback, GameSpec, GameTree, InfoKey, Player, SequenceForm, TabularPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("runtime {elapsed:.1?} exceeds {limit:?}"))
}

fn off_fsp_final(tree: &GameTree, d: &GameDataset, algorithm: Algorithm, iterations: usize, seed: u64) -> f64 {
    let mut learner = LearnerConfig::for_game(d.game.name(), &d.provenance.recipe);
    learner.algorithm = algorithm;
    let cfg = OffFspConfig { iterations, seed, learner, keep_policies: false, ..Default::default() };
    run_off_fsp(tree, d, &cfg).expect("off-fsp run").report.final_nash_conv()
}

fn rps_d1_anchors() -> Outcome {
    let start = Instant::now();
    let tree = GameTree::build(&GameSpec::Rps).unwrap();
    let d = make_rps_d1_exact().unwrap();
    let bc_cfg = LearnerConfig { algorithm: Algorithm::Bc, ..Default::default() };
    let bc = single_agent_baseline(&tree, &d, &bc_cfg, 0).unwrap();
    for p in &bc {
        check(p.flat() == [0.6, 0.2, 0.2], || format!("BC policy {:?}", p.flat()))?;
    }
    let r = nash_conv(&tree, &bc);
    for g in r.per_player_gain {
        check((g - 0.4).abs() < 1e-9, || format!("per-player gain {g}"))?;
    }
    check((r.total - 0.8).abs() < 1e-9, || format!("NashConv {}", r.total))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("BC (0.6, 0.2, 0.2), gain 0.4, NashConv {:.12}", r.total))
}

fn rps_d1_off_fsp_cql() -> Outcome {
    let start = Instant::now();
    let tree = GameTree::build(&GameSpec::Rps).unwrap();
    let d = make_rps_d1_exact().unwrap();
    let finals: Vec<f64> = (0..5).map(|seed| off_fsp_final(&tree, &d, Algorithm::Cql, 500, seed)).collect();
    let m = median(finals.clone());
    check(m < 0.1, || format!("median final NashConv {m:.4} (runs {finals:.4?})"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("median final NashConv {m:.4} over {finals:.4?}"))
}

fn rps_d2_separation() -> Outcome {
    let start = Instant::now();
    let tree = GameTree::build(&GameSpec::RpsAsym).unwrap();
    let d = make_rps_d2(0).unwrap();
    let q: Vec<f64> = (0..5).map(|seed| off_fsp_final(&tree, &d, Algorithm::Qlearning, 500, seed)).collect();
    let c: Vec<f64> = (0..5).map(|seed| off_fsp_final(&tree, &d, Algorithm::Cql, 500, seed)).collect();
    let (mq, mc) = (median(q.clone()), median(c.clone()));
    check(mq - mc >= 0.3, || format!("Q-learning {mq:.4} vs CQL {mc:.4} (runs {q:.4?} / {c:.4?})"))?;
    within(start.elapsed(), Duration::from_secs(240))?;
    Ok(format!("median final NashConv: Q-learning {mq:.4}, CQL {mc:.4}"))
}

type TupleKey = (u32, usize, Option<u32>, u64);

fn tuple_distribution(data: &PlayerDataset, weight: impl Fn(usize) -> f64) -> HashMap<TupleKey, f64> {
    let mut out = HashMap::new();
    let mut total = 0.0;
    for (i, t) in data.tuples.iter().enumerate() {
        let w = weight(i);
        *out.entry((t.infoset, t.action, t.next, t.reward.to_bits())).or_insert(0.0) += w;
        total += w;
    }
    out.values_mut().for_each(|v| *v /= total);
    out
}

/// Every terminal history with its probability when `player` follows `own`
/// and the opponent follows `opponent`.
fn leaf_paths(tree: &GameTree, player: Player, own: &TabularPolicy, opponent: &TabularPolicy) -> Vec<(Vec<u8>, f64)> {
    fn walk(
        tree: &GameTree,
        node: u32,
        hist: &mut Vec<u8>,
        prob: f64,
        pol: &dyn Fn(Player, u32, usize) -> f64,
        out: &mut Vec<(Vec<u8>, f64)>,
    ) {
        match tree.node(node) {
            TreeNode::Terminal { .. } => out.push((hist.clone(), prob)),
            n => {
                for (a, e) in tree.children(node).iter().enumerate() {
                    let p = match n {
                        TreeNode::Decision { player, infoset, .. } => pol(*player, *infoset, a),
                        _ => e.prob,
                    };
                    hist.push(a as u8);
                    walk(tree, e.child, hist, prob * p, pol, out);
                    hist.pop();
                }
            }
        }
    }
    let pol = |p: Player, s: u32, a: usize| {
        let (table, policy) = (tree.infosets(p), if p == player { own } else { opponent });
        policy.at(table, s)[a]
    };
    let mut out = Vec::new();
    walk(tree, tree.root(), &mut Vec::new(), 1.0, &pol, &mut out);
    out
}

fn reweighting_oracle() -> Outcome {
    let start = Instant::now();
    let spec = GameSpec::Kuhn;
    let tree = GameTree::build(&spec).unwrap();
    let d = exact_proportion_dataset(&tree, &uniform_profile(&tree), 48).unwrap();
    let behavior = empirical_tabular(&tree, &d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for p in Player::BOTH {
        let o = p.opponent();
        let data = Arc::new(project(&tree, &d, p).unwrap());
        for _ in 0..20 {
            let target = TabularPolicy::random(tree.infosets(o), o, &mut rng);
            let x = SequenceForm::from_policy(tree.infosets(o), &target);
            let wd = generate_data(&tree, data.clone(), &x, &behavior[o.index()], None).unwrap();
            let got = tuple_distribution(&data, |i| wd.weights[i]);

            let leaves = leaf_paths(&tree, p, &behavior[p.index()], &target);
            let trajectories = leaves.iter().map(|(h, _)| ExtensiveTrajectory::from_history(&spec, h).unwrap()).collect();
            let online = GameDataset { game: spec.clone(), trajectories, provenance: Provenance::default() };
            let online = project(&tree, &online, p).unwrap();
            let want = tuple_distribution(&online, |i| leaves[online.tuples[i].trajectory as usize].1);

            let mut l1 = 0.0;
            for (k, v) in &want {
                l1 += (v - got.get(k).copied().unwrap_or(0.0)).abs();
            }
            for (k, v) in &got {
                if !want.contains_key(k) {
                    l1 += v.abs();
                }
            }
            worst = worst.max(l1);
        }
    }
    check(worst < 1e-9, || format!("max L1 {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("max L1 {worst:.2e} over 40 target opponents"))
}

fn sequence_to(table: &offsp_core::tree::InfosetTable, id: u32, action: usize) -> Vec<(InfoKey, usize)> {
    let mut seq = vec![(table.get(id).key.clone(), action)];
    let mut cur = table.get(id).parent;
    while let Some((parent, a)) = cur {
        seq.push((table.get(parent).key.clone(), a));
        cur = table.get(parent).parent;
    }
    seq.reverse();
    seq
}

fn realization_equivalence() -> Outcome {
    let tree = GameTree::build(&GameSpec::Kuhn).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for kmax in 1..=3 {
        for _ in 0..10 {
            let mut store = AveragePolicyStore::from_profile(&tree, &uniform_profile(&tree));
            let mut members: Vec<[TabularPolicy; 2]> = Vec::new();
            let mut behavioral = uniform_profile(&tree);
            for k in 1..=kmax {
                let brs = Player::BOTH.map(|p| TabularPolicy::random(tree.infosets(p), p, &mut rng));
                store.update(&tree, &brs);
                for p in Player::BOTH {
                    let t = tree.infosets(p);
                    behavioral[p.index()] = mix_behavior(t, &behavioral[p.index()], &brs[p.index()], 1.0 / k as f64);
                }
                members.push(brs);
            }
            let from_store = behavior_from_store(&tree, &store);
            for p in Player::BOTH {
                let t = tree.infosets(p);
                let mixed = behavioral[p.index()].to_behavior(t);
                for (id, s) in t.iter() {
                    for a in 0..s.num_actions {
                        let seq = sequence_to(t, id, a);
                        let want: f64 = members
                            .iter()
                            .map(|m| realization_plan(&m[p.index()].to_behavior(t), &seq).unwrap())
                            .sum::<f64>()
                            / kmax as f64;
                        let stored = store.players[p.index()].value(t, id, a);
                        let a1 = realization_plan(from_store.player(p), &seq).unwrap();
                        let a2 = realization_plan(&mixed, &seq).unwrap();
                        worst = worst.max((stored - want).abs()).max((a1 - want).abs()).max((a2 - want).abs());
                    }
                }
            }
        }
    }
    check(worst < 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e} over K = 1..3"))
}

fn solver_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min_nash_conv = f64::INFINITY;
    let mut worst_z: f64 = 0.0;
    for name in GAME_NAMES {
        let spec = make_game(name, &serde_json::Value::Null).unwrap();
        let tree = GameTree::build(&spec).unwrap();
        for _ in 0..1000 {
            let profile = Player::BOTH.map(|p| TabularPolicy::random(tree.infosets(p), p, &mut rng));
            let r = nash_conv(&tree, &profile);
            min_nash_conv = min_nash_conv.min(r.total);
            check(r.total >= 0.0, || format!("{name}: NashConv {} < 0", r.total))?;
        }
        let profile = Player::BOTH.map(|p| TabularPolicy::random(tree.infosets(p), p, &mut rng));
        let exact = offsp_core::solver::expected_value(&tree, &profile)[0];
        let (mean, se) = monte_carlo_value(&spec, &behavior_profile(&tree, &profile), Fallback::Strict, 100_000, &mut rng)
            .unwrap();
        let z = (mean[0] - exact).abs() / se[0];
        worst_z = worst_z.max(z);
        check(z <= 3.0, || format!("{name}: Monte-Carlo {} vs exact {exact} ({z:.2} sigma)", mean[0]))?;
    }
    let rps = GameTree::build(&GameSpec::Rps).unwrap();
    let uniform = nash_conv(&rps, &uniform_profile(&rps)).total;
    check(uniform.abs() < 1e-12, || format!("NashConv of uniform RPS {uniform}"))?;
    let (_, avg) = fp_solve(&rps, 500, 500).pop().unwrap();
    let dist = avg.iter().flat_map(|p| p.flat().iter()).map(|x| (x - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    check(dist < 0.05, || format!("fp_solve L-inf distance {dist}"))?;
    Ok(format!(
        "min NashConv {min_nash_conv:.3e}, uniform RPS {uniform:.1e}, fp L-inf {dist:.4}, worst MC deviation {worst_z:.2} sigma"
    ))
}

fn leduc_reproduction() -> Outcome {
    let start = Instant::now();
    let spec = GameSpec::Leduc;
    let tree = GameTree::build(&spec).unwrap();
    let random = behavior_profile(&tree, &uniform_profile(&tree));
    let (mut off, mut bc, mut single) = (vec![], vec![], vec![]);
    for seed in 0..3 {
        let d = sample_mix_dataset(&spec, &random, &random, 0.0, 10_000, seed).unwrap();
        let learner = LearnerConfig::for_game("leduc", &d.provenance.recipe);
        bc.push(nash_conv(&tree, &empirical_tabular(&tree, &d).unwrap()).total);
        single.push(nash_conv(&tree, &single_agent_baseline(&tree, &d, &learner, seed).unwrap()).total);
        off.push(off_fsp_final(&tree, &d, Algorithm::Cql, 200, seed));
    }
    let (mo, mb, ms) = (median(off), median(bc), median(single));
    check(mo < mb && mo < ms, || format!("Off-FSP-CQL {mo:.4}, BC {mb:.4}, single-agent CQL {ms:.4}"))?;
    within(start.elapsed(), Duration::from_secs(1800))?;
    Ok(format!("median NashConv: Off-FSP-CQL {mo:.4} < BC {mb:.4}, single-agent CQL {ms:.4}"))
}

fn learner_suite() -> Outcome {
    let tree = GameTree::build(&GameSpec::Rps).unwrap();
    let d = make_rps_d1_exact().unwrap();
    let table = tree.infosets(Player::Zero);
    let data = Arc::new(project(&tree, &d, Player::Zero).unwrap());
    let wd = WeightedPlayerDataset::uniform(data.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut a = QTable::zeros(table, Player::Zero);
    let mut b = a.clone();
    for _ in 0..50 {
        let batch = wd.resample_batch(128, &mut rng).unwrap();
        let (ta, tb) = (a.clone(), b.clone());
        td_step(table, &mut a, &ta, &data, &batch, 1.0, 0.05);
        cql_step(table, &mut b, &tb, &data, &batch, 1.0, 0.05, 0.0);
    }
    check(a == b, || "CQL with alpha 0 differs from td_step".into())?;

    check(bcq_mask(&[0.6, 0.2, 0.2], 0.1) == [true; 3], || "BCQ (0.6, 0.2, 0.2)".into())?;
    check(bcq_mask(&[0.98, 0.02, 0.0], 0.1) == [true, false, false], || "BCQ (0.98, 0.02, 0)".into())?;
    check(bcq_mask(&[0.5, 0.0, 0.5], 0.0) == [true, false, true], || "BCQ threshold 0".into())?;
    let mask = ActionMask::from_counts(table, &[600.0, 200.0, 200.0], 0.1);
    check(mask.row(table, 0) == Some(&[true; 3][..]), || "BCQ mask from counts".into())?;

    let weights = data.tuples.iter().map(|t| [1.0, 3.0, 0.5][t.action]).collect();
    let skewed = WeightedPlayerDataset::new(data.clone(), weights).unwrap();
    let mut q = QTable::zeros(table, Player::Zero);
    q.set(table, 0, 0, 0.3);
    q.set(table, 0, 1, -1.2);
    q.set(table, 0, 2, 2.0);
    let crr = crr_policy(table, &q, &weighted_counts(table, &skewed), 1.0, 1.0);
    let bc = learn_bc(table, &skewed).unwrap();
    check(crr == bc, || format!("CRR bound 1 {:?} vs weighted BC {:?}", crr.flat(), bc.flat()))?;

    for algorithm in Algorithm::ALL {
        let learner = LearnerConfig { algorithm, steps: 50, batch_size: 256, ..Default::default() };
        let cfg = OffFspConfig { iterations: 6, eval_every: 2, seed: 3, learner: learner.clone(), ..Default::default() };
        let bytes = |parallel: bool| {
            let run = run_off_fsp(&tree, &d, &OffFspConfig { parallel, ..cfg.clone() }).unwrap();
            let mut out = Vec::new();
            run.report.write_csv(&mut out).unwrap();
            run.store.players.iter().flat_map(|x| x.flat()).for_each(|v| out.extend(v.to_le_bytes()));
            let (_, q) = learn_best_response(table, &wd, None, &learner, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            q.write_csv(table, &mut out).unwrap();
            out
        };
        let first = bytes(true);
        check(first == bytes(true) && first == bytes(false), || format!("{algorithm}: outputs differ across runs"))?;
    }
    Ok("CQL(0) = TD, BCQ examples, CRR(bound 1) = weighted BC, byte-identical reruns".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("RPS D1 analytic anchors", rps_d1_anchors),
        ("Off-FSP-CQL on RPS D1", rps_d1_off_fsp_cql),
        ("RPS D2 partial-coverage separation", rps_d2_separation),
        ("Kuhn reweighting oracle", reweighting_oracle),
        ("Realization equivalence", realization_equivalence),
        ("Exact-solver suite", solver_suite),
        ("Leduc mix:0 ordering", leduc_reproduction),
        ("Learner unit suite", learner_suite),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} [{elapsed:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {detail} [{elapsed:.1?}]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
