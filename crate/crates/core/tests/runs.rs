use lteu_core::harness::{run, Algorithm, Metrics};
use lteu_core::scenario::ScenarioConfig;
use lteu_core::wifi;

fn quick() -> ScenarioConfig {
    ScenarioConfig { max_iterations: 300, ..ScenarioConfig::default() }
}

#[test]
fn every_algorithm_passes_its_audits() {
    for alg in Algorithm::ALL {
        for seed in 0..3 {
            let r = run(&quick(), alg, seed).unwrap();
            assert!(r.audit.wifi_guarantee, "{alg} seed {seed}");
            assert_eq!(r.audit.feasibility_violations, 0, "{alg} seed {seed}");
            assert!(r.audit.max_reward_error <= 1e-9, "{alg} seed {seed}: {}", r.audit.max_reward_error);
            assert!(r.converged_at.is_none_or(|t| t <= r.config.max_iterations));
            assert!(r.records.iter().all(|rec| rec.user_rates.is_some()));
        }
    }
}

#[test]
fn metrics_are_recomputable_from_final_rates() {
    let r = run(&quick(), Algorithm::Esn, 4).unwrap();
    let again = Metrics::from_rates(&r.final_rates, r.metrics.per_bs_utility.clone());
    assert_eq!(again, r.metrics);
    let total: f64 = r.final_rates.totals().iter().sum();
    assert!((total - r.metrics.sum_rate).abs() <= 1e-9 * total.max(1.0));
}

#[test]
fn identical_inputs_give_identical_runs() {
    for alg in [Algorithm::Esn, Algorithm::QLteuCoupled] {
        let a = run(&quick(), alg, 11).unwrap();
        let b = run(&quick(), alg, 11).unwrap();
        // NaN trace fields rule out PartialEq
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

#[test]
fn some_users_end_up_decoupled() {
    // Dense reference layout: small cells overlap most users.
    let config = ScenarioConfig { macro_radius_m: 200.0, n_sbs: 4, n_users: 12, ..ScenarioConfig::default() };
    let r = run(&config, Algorithm::Esn, 0).unwrap();
    assert!(r.final_rates.decoupled_users() > 0);
}

#[test]
fn coupled_baseline_never_decouples() {
    let config = ScenarioConfig { macro_radius_m: 200.0, max_iterations: 300, ..ScenarioConfig::default() };
    for seed in 0..4 {
        let r = run(&config, Algorithm::QLteuCoupled, seed).unwrap();
        assert_eq!(r.final_rates.decoupled_users(), 0);
    }
}

#[test]
fn stricter_wifi_requirement_shrinks_lte_share() {
    let mut config = ScenarioConfig::default();
    let mut prev = f64::INFINITY;
    for r_w in [0.5e6, 1e6, 2e6, 4e6, 8e6, 16e6] {
        config.wifi_rate_req_bps = r_w;
        let l = wifi::network_lte_fraction(&config).unwrap();
        assert!(l.fraction <= prev);
        prev = l.fraction;
    }
}

#[test]
fn overloaded_wifi_mutes_lte_but_is_a_valid_run() {
    let config = ScenarioConfig { wifi_rate_req_bps: 1e9, max_iterations: 50, ..ScenarioConfig::default() };
    let r = run(&config, Algorithm::QLteuDecoupled, 0).unwrap();
    assert!(r.lte.overload);
    assert_eq!(r.lte.fraction, 0.0);
    assert!(r.audit.wifi_guarantee);
    assert_eq!(r.audit.feasibility_violations, 0);
}
