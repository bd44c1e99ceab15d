use std::sync::{Arc, OnceLock};

use offsp_core::dataset::{
    empirical_tabular, largest_remainder, load_from_reader, project, sample_dataset, save_to_writer,
    ExtensiveTrajectory,
};
use offsp_core::game::{NodeKind, GAME_NAMES};
use offsp_core::off_fsp::{lambda_mix, AveragePolicyStore};
use offsp_core::policy::{behavior_profile, uniform_profile};
use offsp_core::reweight::Reweighter;
use offsp_core::solver::{best_response, expected_value, nash_conv};
use offsp_core::{make_game, Actor, GameSpec, GameTree, Player, SequenceForm, TabularPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trees() -> &'static Vec<GameTree> {
    static TREES: OnceLock<Vec<GameTree>> = OnceLock::new();
    TREES.get_or_init(|| {
        GAME_NAMES
            .iter()
            .map(|n| GameTree::build(&make_game(n, &serde_json::Value::Null).unwrap()).unwrap())
            .collect()
    })
}

fn random_profile(tree: &GameTree, seed: u64) -> [TabularPolicy; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Player::BOTH.map(|p| TabularPolicy::random(tree.infosets(p), p, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_playouts_are_zero_sum_and_consistent(game in 0..GAME_NAMES.len(), seed in any::<u64>()) {
        let tree = &trees()[game];
        let spec = tree.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = spec.initial_state();
        while !state.is_terminal() {
            let n = spec.num_actions(&state).unwrap();
            prop_assert!(n >= 1);
            prop_assert_eq!(spec.legal_actions(&state).unwrap(), (0..n).collect::<Vec<_>>());
            if let Actor::Chance = spec.current_player(&state).unwrap() {
                let total: f64 = spec.chance_outcomes(&state).unwrap().iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
            prop_assert!(spec.apply(&state, n).is_err());
            state = spec.apply(&state, rng.gen_range(0..n)).unwrap();
        }
        let r = state.returns().unwrap();
        prop_assert!((r[0] + r[1]).abs() < 1e-12);
        let node = tree.follow(state.history()).unwrap();
        let again = spec.state_from_history(state.history()).unwrap();
        prop_assert!(matches!(again.node(), NodeKind::Terminal(_)));
        let is_leaf = matches!(tree.node(node), offsp_core::tree::TreeNode::Terminal { .. });
        prop_assert!(is_leaf);
        let t = ExtensiveTrajectory::from_history(spec, state.history()).unwrap();
        prop_assert_eq!(t.returns, r);
    }

    #[test]
    fn nash_conv_is_non_negative(game in 0..GAME_NAMES.len(), seed in any::<u64>()) {
        let tree = &trees()[game];
        let profile = random_profile(tree, seed);
        let r = nash_conv(tree, &profile);
        prop_assert!(r.per_player_gain.iter().all(|g| *g >= -1e-12));
        let v = expected_value(tree, &profile);
        prop_assert!((v[0] + v[1]).abs() < 1e-12);
        // The reported value is what the best response actually earns.
        let br = best_response(tree, &profile[1], Player::Zero);
        let with_br = expected_value(tree, &[br.policy.clone(), profile[1].clone()]);
        prop_assert!((with_br[0] - br.value).abs() < 1e-9);
    }

    #[test]
    fn sequence_form_is_consistent(game in 0..GAME_NAMES.len(), seed in any::<u64>()) {
        let tree = &trees()[game];
        for p in Player::BOTH {
            let table = tree.infosets(p);
            let pol = &random_profile(tree, seed)[p.index()];
            let x = SequenceForm::from_policy(table, pol);
            for (id, s) in table.iter() {
                let row: f64 = x.flat()[s.offset..s.offset + s.num_actions].iter().sum();
                prop_assert!((row - x.reach(table, id)).abs() < 1e-12);
                if s.parent.is_none() {
                    prop_assert!((row - 1.0).abs() < 1e-12);
                }
            }
            let back = x.to_policy(table);
            for (a, b) in back.flat().iter().zip(pol.flat()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lambda_stays_in_unit_interval(alpha in 0.0..=1.0f64, x_prev in 0.0..=1.0f64, x_br in 0.0..=1.0f64) {
        let l = lambda_mix(alpha, x_prev, x_br);
        prop_assert!((0.0..=1.0).contains(&l));
    }

    #[test]
    fn store_rows_stay_distributions(game in 0..GAME_NAMES.len(), seed in any::<u64>(), k in 1usize..6) {
        let tree = &trees()[game];
        let mut store = AveragePolicyStore::from_profile(tree, &uniform_profile(tree));
        for i in 0..k {
            store.update(tree, &random_profile(tree, seed.wrapping_add(i as u64)));
        }
        prop_assert_eq!(store.iteration, k);
        for p in Player::BOTH {
            let table = tree.infosets(p);
            let x = &store.players[p.index()];
            prop_assert!(x.flat().iter().all(|v| *v >= 0.0));
            for (id, s) in table.iter() {
                let row: f64 = x.flat()[s.offset..s.offset + s.num_actions].iter().sum();
                prop_assert!((row - x.reach(table, id)).abs() < 1e-12);
            }
            let pol = x.to_policy(table);
            for (id, _) in table.iter() {
                let sum: f64 = pol.at(table, id).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn largest_remainder_sums_to_n(raw in prop::collection::vec(0.0..10.0f64, 1..12), n in 0usize..5000) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let counts = largest_remainder(&weights, n);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, w) in counts.iter().zip(&weights) {
            prop_assert!((*c as f64 - w * n as f64).abs() < 1.0 + 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reweighting_properties(game in 0..GAME_NAMES.len(), seed in any::<u64>()) {
        let tree = &trees()[game];
        let spec: &GameSpec = tree.spec();
        let behavior = behavior_profile(tree, &random_profile(tree, seed));
        let d = sample_dataset(spec, &behavior, 200, seed).unwrap();
        let empirical = empirical_tabular(tree, &d).unwrap();
        for p in Player::BOTH {
            let o = p.opponent();
            let data = Arc::new(project(tree, &d, p).unwrap());
            let rw = Reweighter::new(tree, data.clone(), &empirical[o.index()]).unwrap();
            // Reweighting toward the empirical policy itself is the identity.
            let same = SequenceForm::from_policy(tree.infosets(o), &empirical[o.index()]);
            let wd = rw.weigh(&same, None).unwrap();
            prop_assert!(wd.weights.iter().all(|w| (w - 1.0).abs() < 1e-9));
            let other = SequenceForm::from_policy(tree.infosets(o), &random_profile(tree, seed ^ 1)[o.index()]);
            let wd = rw.weigh(&other, Some(3.0)).unwrap();
            prop_assert!(wd.weights.iter().all(|w| w.is_finite() && *w >= 0.0 && *w <= 3.0));
            prop_assert_eq!(wd.weights.len(), data.len());
        }
    }

    #[test]
    fn dataset_file_round_trip(game in 0..GAME_NAMES.len(), seed in any::<u64>()) {
        let tree = &trees()[game];
        let d = sample_dataset(tree.spec(), &behavior_profile(tree, &uniform_profile(tree)), 25, seed).unwrap();
        let mut buf = Vec::new();
        save_to_writer(&d, &mut buf).unwrap();
        let back = load_from_reader(buf.as_slice(), Some(tree.spec().name())).unwrap();
        prop_assert_eq!(back, d);
    }
}
