use std::collections::BTreeSet;

use lteu_core::esn::{LearningRate, Readout};
use lteu_core::game::{
    count_bounded_vectors, resolve_conflicts, validate_action, ActionSpace, CellularGame, GameModel, GameVariant,
    MixedStrategy,
};
use lteu_core::harness::recompute_utilities;
use lteu_core::scenario::{self, ScenarioConfig};
use lteu_core::wifi;
use proptest::prelude::*;

fn brute_count(k: usize, z: u32) -> u128 {
    // vectors of k levels in 0..=z with sum <= z
    fn go(k: usize, left: u32) -> u128 {
        if k == 0 {
            return 1;
        }
        (0..=left).map(|x| go(k - 1, left - x)).sum()
    }
    go(k, z)
}

fn game(seed: u64, n_sbs: usize, n_users: usize, variant: GameVariant) -> CellularGame {
    let config = ScenarioConfig { macro_radius_m: 200.0, n_sbs, n_users, action_set_size: 16, ..Default::default() };
    let lte = wifi::network_lte_fraction(&config).unwrap();
    let topology = scenario::generate_topology(&config, seed);
    let channel = scenario::draw_channel(&topology, &config, seed);
    CellularGame::new(&config, &topology, channel, lte.fraction, variant, seed)
}

fn variant(i: u8) -> GameVariant {
    match i % 3 {
        0 => GameVariant::LTEU_DECOUPLED,
        1 => GameVariant::LTE_DECOUPLED,
        _ => GameVariant::LTEU_COUPLED,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounded_vector_count_matches_brute_force(k in 0usize..5, z in 0u32..8) {
        prop_assert_eq!(count_bounded_vectors(k, z), brute_count(k, z));
    }

    #[test]
    fn action_spaces_are_valid_and_distinct(
        k in 0usize..6, z in 2u32..11, cap in 1usize..80, seed: u64, licensed_only: bool, coupled: bool,
    ) {
        let owner = if licensed_only { 0 } else { 1 };
        let space = ActionSpace::build(owner, (0..k).collect(), z, cap, seed, coupled);
        prop_assert!(!space.is_empty());
        prop_assert!(space.len() <= cap.max(1 + k));
        let mut seen = BTreeSet::new();
        for a in &space.actions {
            prop_assert!(validate_action(a, z).is_ok());
            prop_assert_eq!(a.is_licensed_only(), licensed_only || k == 0);
            let key: Vec<u64> = a.feature_vector().iter().map(|x| x.to_bits()).collect();
            prop_assert!(seen.insert(key), "duplicate action");
        }
        prop_assert!(space.actions.iter().any(|a| a.feature_vector().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn lte_fraction_protects_wifi_exactly(sat in 1e6f64..5e8, n in 1usize..40, req in 1e4f64..2e7) {
        let l = wifi::lte_fraction_from_throughput(sat, n, req);
        prop_assert!((0.0..=1.0).contains(&l.fraction));
        if l.overload {
            prop_assert_eq!(l.fraction, 0.0);
        } else {
            prop_assert!(l.guarantee_holds());
            // maximal: one ulp more would break the guarantee or exceed 1
            let up = f64::from_bits(l.fraction.to_bits() + 1);
            let bumped = wifi::LteFraction { fraction: up, ..l };
            prop_assert!(up > 1.0 || !bumped.guarantee_holds() || l.fraction == 1.0);
        }
    }

    #[test]
    fn epsilon_greedy_is_a_distribution(n in 1usize..40, best_seed: usize, eps in 0.0f64..1.0) {
        let best = best_seed % n;
        let s = MixedStrategy::epsilon_greedy(n, best, eps);
        let total: f64 = s.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((s.probs()[best] - (1.0 - eps + eps / n as f64)).abs() < 1e-12);
    }

    #[test]
    fn resolution_leaves_one_server_per_link(seed in 0u64..500, pick: u64, v in 0u8..3) {
        let g = game(seed, 3, 10, variant(v));
        let joint: Vec<usize> = (0..g.n_players()).map(|n| (pick as usize >> (4 * n)) % g.n_actions(n)).collect();
        let raw = g.raw_actions(&joint);
        let caps = g.capacity().capacities_for(raw.iter());
        let resolved = resolve_conflicts(&raw, &caps, g.is_coupled());
        for user in 0..caps.n_users {
            let dl: Vec<usize> = resolved.iter().filter(|a| a.users.iter().position(|&u| u == user).is_some_and(|s| a.grants_dl(s))).map(|a| a.owner).collect();
            let ul: Vec<usize> = resolved.iter().filter(|a| a.users.iter().position(|&u| u == user).is_some_and(|s| a.grants_ul(s))).map(|a| a.owner).collect();
            prop_assert!(dl.len() <= 1 && ul.len() <= 1);
            if g.is_coupled() && !dl.is_empty() && !ul.is_empty() {
                prop_assert_eq!(&dl, &ul);
            }
        }
    }

    #[test]
    fn fast_utilities_match_recomputation(seed in 0u64..500, pick: u64, v in 0u8..3) {
        let g = game(seed, 3, 10, variant(v));
        let joint: Vec<usize> = (0..g.n_players()).map(|n| (pick as usize >> (4 * n)) % g.n_actions(n)).collect();
        let fast = g.utilities(&joint);
        let (slow, _, caps) = recompute_utilities(&g, &joint);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!(a.is_finite() && *a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
        for user in 0..caps.n_users {
            for bs in 0..g.n_players() {
                for c in [caps.l_dl(user, bs), caps.l_ul(user, bs), caps.u_dl(user, bs), caps.u_ul(user, bs)] {
                    prop_assert!(c.is_finite() && c >= 0.0);
                }
            }
        }
    }

    #[test]
    fn stable_step_never_grows_the_error(
        mu in prop::collection::vec(-1.0f64..1.0, 1..6), target in -50.0f64..50.0, lambda in 0.001f64..0.3,
    ) {
        let x = [1.0];
        let z2: f64 = mu.iter().map(|v| v * v).sum::<f64>() + 1.0;
        prop_assume!(lambda * z2 < 2.0);
        let mut readout = Readout::zeros(1, mu.len() + 1, LearningRate::Fixed(lambda));
        let mut prev = f64::INFINITY;
        for t in 0..20 {
            let before = readout.train_step(&mu, &x, 0, target, t).unwrap();
            let err = (target - before).abs();
            prop_assert!(err <= prev + 1e-12);
            prev = err;
        }
    }

    #[test]
    fn topology_respects_geometry(seed: u64, n_sbs in 0usize..6, n_users in 1usize..30) {
        let config = ScenarioConfig { n_sbs, n_users, ..Default::default() };
        let t = scenario::generate_topology(&config, seed);
        for p in t.sbs_positions.iter().chain(&t.wap_positions).chain(&t.user_positions) {
            prop_assert!(p.norm() <= config.macro_radius_m + 1e-9);
        }
        for (user, covering) in t.coverage_map.iter().enumerate() {
            prop_assert_eq!(covering[0], 0);
            for (i, s) in t.sbs_positions.iter().enumerate() {
                let inside = s.distance(&t.user_positions[user]) <= config.sbs_coverage_m;
                prop_assert_eq!(covering.contains(&(i + 1)), inside);
            }
        }
    }
}
