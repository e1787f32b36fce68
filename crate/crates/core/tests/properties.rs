mod common;

use common::*;
use dagoff::actor::mlp::MlpParams;
use dagoff::actor::quantize::{gnop_quantize_with_noise, is_one_climb, order_preserving_quantize};
use dagoff::actor::replay::{Experience, ReplayMemory};
use dagoff::baselines::{all_edge, all_local, exhaustive, exhaustive_one_climb};
use dagoff::critic::{project_simplex, solve, CriticOpts};
use dagoff::graph::TaskGraph;
use dagoff::rng::stream;
use dagoff::schedule::{FrequencyAllocation, Instance, OffloadDecision};
use dagoff::EnvParams;
use proptest::prelude::*;
use rand::Rng;

fn dag(seed: u64, m: usize, p: f64) -> TaskGraph {
    random_dag(&mut stream(seed, 0), m, p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn paths_match_brute_force(seed: u64, m in 1usize..=9, p in 0.0f64..0.8) {
        let g = dag(seed, m, p);
        let paths = g.enumerate_paths().unwrap();
        let listed: Vec<Vec<usize>> = paths.paths().iter().map(|p| p.tasks.clone()).collect();
        prop_assert_eq!(&listed, &brute_force_paths(&g));
        prop_assert_eq!(listed.len() as u64, count_paths(&g));
        for task in 0..g.task_count() {
            for &o in paths.membership(task) {
                prop_assert!(listed[o].contains(&task));
            }
            let expected = listed.iter().filter(|p| p.contains(&task)).count();
            prop_assert_eq!(paths.membership(task).len(), expected);
        }
    }

    #[test]
    fn completion_time_is_the_longest_path(seed: u64, m in 1usize..=10, p in 0.0f64..0.7) {
        let mut rng = stream(seed, 1);
        let g = random_dag(&mut rng, m, p);
        let paths = g.enumerate_paths().unwrap();
        let params = EnvParams::default();
        let state = random_state(&mut rng, &params, &g);
        let inst = Instance::new(&g, &paths, &params, &state);
        let d = random_decision(&mut rng, m);
        let f = FrequencyAllocation((0..m).map(|_| rng.random_range(1e6..1e7)).collect());
        let ft = inst.finish_time_recursive(&d, &f);
        let longest = inst.etc(&d, &f).unwrap().completion_s;
        prop_assert!((ft - longest).abs() <= 1e-9 * longest.abs().max(1e-300), "{} vs {}", ft, longest);
    }

    #[test]
    fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..30), target in 0.01f64..3.0) {
        let x = project_simplex(&v, target);
        prop_assert!(x.iter().all(|&xi| xi >= 0.0));
        prop_assert!((x.iter().sum::<f64>() - target).abs() <= 1e-12 * target.max(1.0));
        let y = project_simplex(&x, target);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn order_is_preserved(relaxed in prop::collection::vec(0.0f64..1.0, 1..12), count in 1usize..=12) {
        let count = count.min(relaxed.len() + 1);
        for action in order_preserving_quantize(&relaxed, count).unwrap() {
            for i in 0..relaxed.len() {
                for j in 0..relaxed.len() {
                    if relaxed[i] > relaxed[j] {
                        prop_assert!(action.bits()[i] >= action.bits()[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn candidates_are_distinct_and_bounded(
        relaxed in prop::collection::vec(0.0f64..1.0, 8),
        noise in prop::collection::vec(-3.0f64..3.0, 8),
        half in 1usize..=9,
    ) {
        let set = gnop_quantize_with_noise(&relaxed, 2 * half, &noise).unwrap();
        prop_assert!(set.len() <= 2 * half);
        prop_assert_eq!(set.actions.len(), set.provenance.len());
        for (i, a) in set.actions.iter().enumerate() {
            prop_assert_eq!(a.len(), 8);
            prop_assert!(!set.actions[..i].contains(a));
        }
    }

    #[test]
    fn one_climb_matches_scanner(seed: u64, m in 1usize..=10, p in 0.0f64..0.7, code: u64) {
        let g = dag(seed, m, p);
        let paths = g.enumerate_paths().unwrap();
        let d = OffloadDecision::from_code(code, m);
        prop_assert_eq!(is_one_climb(&d, &paths), naive_one_climb(&d, &paths));
        prop_assert!(is_one_climb(&OffloadDecision::all_edge(m), &paths));
        prop_assert!(is_one_climb(&OffloadDecision::all_local(m), &paths));
    }

    #[test]
    fn replay_keeps_the_newest(capacity in 1usize..20, pushes in 0usize..60) {
        let mut mem = ReplayMemory::new(capacity);
        for k in 0..pushes {
            mem.push(Experience { features: vec![k as f64], action: vec![] });
            prop_assert!(mem.len() <= capacity);
        }
        let kept: Vec<f64> = mem.iter_chronological().map(|e| e.features[0]).collect();
        let start = pushes.saturating_sub(capacity);
        prop_assert_eq!(kept, (start..pushes).map(|k| k as f64).collect::<Vec<_>>());
    }

    #[test]
    fn network_outputs_are_probabilities(seed: u64, x in prop::collection::vec(-20.0f64..20.0, 4)) {
        let net = MlpParams::new(&[4, 9, 7, 3], &mut stream(seed, 2));
        for p in net.forward(&x).unwrap() {
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exhaustive_bounds_every_fixed_policy(seed: u64, m in 1usize..=6, p in 0.0f64..0.7) {
        let mut rng = stream(seed, 3);
        let g = random_dag(&mut rng, m, p);
        let paths = g.enumerate_paths().unwrap();
        let params = EnvParams::default();
        let state = random_state(&mut rng, &params, &g);
        let inst = Instance::new(&g, &paths, &params, &state);
        let opts = CriticOpts::default();
        let best = exhaustive(&inst, &opts).unwrap().eta();
        let tol = 1e-6 * best;
        prop_assert!(best <= all_local(&inst, &opts).unwrap().eta() + tol);
        prop_assert!(best <= all_edge(&inst, &opts).unwrap().eta() + tol);
        prop_assert!(best <= exhaustive_one_climb(&inst, &opts).unwrap().eta() + tol);
        let d = random_decision(&mut rng, m);
        prop_assert!(best <= solve(&inst, &d, &opts).unwrap().eta() + tol);
    }
}
