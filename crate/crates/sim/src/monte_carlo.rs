//! Independent seeded replications of [`run`] with bootstrap intervals.

use lteu_core::harness::{run, Algorithm, Audit, HarnessError};
use lteu_core::rng::{stream, tag};
use lteu_core::stats;
use lteu_core::ScenarioConfig;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Bootstrap resamples per interval.
pub const BOOTSTRAP_RESAMPLES: usize = 2000;

/// Seeds of an `n`-run batch. Consecutive, so two algorithms run with the
/// same base seed see the same topologies and channels run by run.
pub fn run_seeds(base_seed: u64, n: usize) -> impl Iterator<Item = u64> {
    (0..n as u64).map(move |i| base_seed.wrapping_add(i))
}

/// What one replication contributes to the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub converged_at: Option<usize>,
    pub sum_rate: f64,
    pub median_rate: f64,
    pub decoupled_users: usize,
    /// Per-user DL + UL rates, ascending.
    pub rate_samples: Vec<f64>,
    pub audit: Audit,
    pub lte_fraction: f64,
}

impl RunSummary {
    pub fn audit_ok(&self) -> bool {
        self.audit.wifi_guarantee && self.audit.feasibility_violations == 0 && self.audit.max_reward_error <= 1e-9
    }
}

pub fn summarize_run(config: &ScenarioConfig, algorithm: Algorithm, seed: u64) -> Result<RunSummary, HarnessError> {
    let r = run(config, algorithm, seed)?;
    Ok(RunSummary {
        seed,
        converged_at: r.converged_at,
        sum_rate: r.metrics.sum_rate,
        median_rate: r.metrics.median_user_rate,
        decoupled_users: r.metrics.decoupled_users,
        rate_samples: r.metrics.rate_samples,
        audit: r.audit,
        lte_fraction: r.lte.fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub median: f64,
    /// 95 % percentile-bootstrap interval of the mean.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Interval {
    pub fn of(xs: &[f64], seed: u64) -> Self {
        let (ci_low, ci_high) = bootstrap_ci(xs, BOOTSTRAP_RESAMPLES, seed);
        Self { mean: stats::mean(xs), median: stats::median(xs), ci_low, ci_high }
    }
}

/// Percentile bootstrap 95 % interval for the mean of `xs`.
pub fn bootstrap_ci(xs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    match xs.len() {
        0 => return (f64::NAN, f64::NAN),
        1 => return (xs[0], xs[0]),
        _ => {}
    }
    let mut rng = stream(seed, tag::BOOTSTRAP, xs.len() as u64);
    let n = xs.len();
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let sorted = stats::sorted(&means);
    (stats::percentile_sorted(&sorted, 2.5), stats::percentile_sorted(&sorted, 97.5))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub algorithm: Algorithm,
    pub n_runs: usize,
    pub base_seed: u64,
    pub sum_rate: Interval,
    pub median_rate: Interval,
    pub converged_runs: usize,
    pub mean_converged_at: Option<f64>,
    pub mean_decoupled_users: f64,
    pub lte_fraction: f64,
    pub audit_failures: usize,
    /// Every user rate of every run, ascending.
    pub pooled_rates: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl Aggregate {
    pub fn from_runs(algorithm: Algorithm, base_seed: u64, runs: Vec<RunSummary>) -> Self {
        let sums: Vec<f64> = runs.iter().map(|r| r.sum_rate).collect();
        let medians: Vec<f64> = runs.iter().map(|r| r.median_rate).collect();
        let converged: Vec<f64> = runs.iter().filter_map(|r| r.converged_at.map(|t| t as f64)).collect();
        let pooled: Vec<f64> = runs.iter().flat_map(|r| r.rate_samples.iter().copied()).collect();
        Self {
            algorithm,
            n_runs: runs.len(),
            base_seed,
            sum_rate: Interval::of(&sums, base_seed),
            median_rate: Interval::of(&medians, base_seed ^ 1),
            converged_runs: converged.len(),
            mean_converged_at: (!converged.is_empty()).then(|| stats::mean(&converged)),
            mean_decoupled_users: stats::mean(&runs.iter().map(|r| r.decoupled_users as f64).collect::<Vec<_>>()),
            lte_fraction: runs.first().map_or(f64::NAN, |r| r.lte_fraction),
            audit_failures: runs.iter().filter(|r| !r.audit_ok()).count(),
            pooled_rates: stats::sorted(&pooled),
            runs,
        }
    }
}

/// `n_runs` replications in parallel. Results are ordered by seed, so the
/// aggregate does not depend on scheduling.
pub fn monte_carlo(
    config: &ScenarioConfig,
    algorithm: Algorithm,
    n_runs: usize,
    base_seed: u64,
) -> Result<Aggregate, HarnessError> {
    let seeds: Vec<u64> = run_seeds(base_seed, n_runs).collect();
    let runs = seeds.par_iter().map(|&s| summarize_run(config, algorithm, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(Aggregate::from_runs(algorithm, base_seed, runs))
}
