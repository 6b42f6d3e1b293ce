//! File formats and Monte-Carlo aggregation against independent checks.

use lteu_core::harness::{build_learners, run, run_with_learners, Algorithm, Learner};
use lteu_core::rng::stream;
use lteu_core::{MatrixGame, ScenarioConfig};
use lteu_sim::checkpoint::{read_agent, write_agent};
use lteu_sim::monte_carlo::{bootstrap_ci, monte_carlo};
use lteu_sim::ne_check::tiny_cellular_game;
use lteu_sim::small_game::{read_small_game, write_small_game};
use lteu_sim::sweep::{sweep, Axis};
use proptest::prelude::*;
use rand::Rng;

fn small() -> ScenarioConfig {
    ScenarioConfig { n_sbs: 2, n_users: 6, max_iterations: 300, ..ScenarioConfig::default() }
}

#[test]
fn checkpoint_restores_a_trained_agent() {
    let config = small();
    let seed = 4;
    let (_, trained) = run_with_learners(&config, Algorithm::Esn, seed).unwrap();
    let game = tiny_cellular_game(&config, seed).unwrap();
    let mut fresh = build_learners(&game, Algorithm::Esn, &config, seed).unwrap();
    for (saved, blank) in trained.iter().zip(fresh.iter_mut()) {
        let (Learner::Esn(saved), Learner::Esn(blank)) = (saved, blank) else { panic!("ESN learners expected") };
        let text = write_agent(saved);
        let saved_state = read_agent(&text).unwrap();
        blank.restore(&game, saved_state.alpha, saved_state.beta, &saved_state.beta_input).unwrap();
        assert_eq!(blank.beta_estimates(), saved.beta_estimates());
        assert_eq!(blank.select().best_action, saved.clone().select().best_action);
        assert_eq!(write_agent(blank), text);
    }
}

#[test]
fn checkpoint_of_another_shape_is_refused() {
    let config = small();
    let (_, trained) = run_with_learners(&config, Algorithm::Esn, 4).unwrap();
    let Learner::Esn(saved) = &trained[0] else { panic!() };
    let saved_state = read_agent(&write_agent(saved)).unwrap();
    let other = ScenarioConfig { reservoir_units: 40, ..config.clone() };
    let game = tiny_cellular_game(&other, 4).unwrap();
    let mut learners = build_learners(&game, Algorithm::Esn, &other, 4).unwrap();
    let Learner::Esn(blank) = &mut learners[0] else { panic!() };
    assert!(blank.restore(&game, saved_state.alpha, saved_state.beta, &saved_state.beta_input).is_err());
}

#[test]
fn single_run_aggregate_is_the_run() {
    let config = small();
    let r = run(&config, Algorithm::QLteuDecoupled, 11).unwrap();
    let a = monte_carlo(&config, Algorithm::QLteuDecoupled, 1, 11).unwrap();
    assert_eq!(a.sum_rate.mean, r.metrics.sum_rate);
    assert_eq!((a.sum_rate.ci_low, a.sum_rate.ci_high), (r.metrics.sum_rate, r.metrics.sum_rate));
    assert_eq!(a.median_rate.median, r.metrics.median_user_rate);
    assert_eq!(a.pooled_rates, r.metrics.rate_samples);
    assert_eq!(a.mean_converged_at, r.converged_at.map(|t| t as f64));
}

#[test]
fn aggregates_are_deterministic() {
    let config = small();
    let a = monte_carlo(&config, Algorithm::Esn, 3, 20).unwrap();
    let b = monte_carlo(&config, Algorithm::Esn, 3, 20).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_cell_matches_direct_batch() {
    let config = small();
    let rows = sweep(&config, Axis::NUsers, &[5.0], &[Algorithm::QLteDecoupled], 2, 7).unwrap();
    let direct = monte_carlo(&ScenarioConfig { n_users: 5, ..config }, Algorithm::QLteDecoupled, 2, 7).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].aggregate, direct);
}

#[test]
fn bootstrap_interval_narrows_with_more_runs() {
    // averaged over repeated trials the width shrinks roughly as 1/sqrt(n)
    let width = |n: usize| -> f64 {
        (0..40u64)
            .map(|trial| {
                let mut rng = stream(trial, 90, n as u64);
                let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                let (lo, hi) = bootstrap_ci(&xs, 500, trial);
                hi - lo
            })
            .sum::<f64>()
            / 40.0
    };
    let (w25, w100, w400) = (width(25), width(100), width(400));
    assert!(w100 < w25 && w400 < w100, "{w25} {w100} {w400}");
    assert!((w25 / w100 - 2.0).abs() < 0.3, "ratio {}", w25 / w100);
}

proptest! {
    #[test]
    fn small_games_round_trip(
        sizes in prop::collection::vec(1usize..4, 1..4),
        seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, 91, 0);
        let g = MatrixGame::from_fn(sizes, |_, _| (rng.gen::<f64>() - 0.5) * 1e3);
        prop_assert_eq!(read_small_game(&write_small_game(&g)).unwrap(), g);
    }
}
