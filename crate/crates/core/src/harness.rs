//! Synchronous round loop: every BS announces an action, the joint action is
//! conflict-resolved and scored, then every BS learns. A run stops once the
//! announced best profile has been stable for a full window.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, BroadcastMsg, EsnAgent, EsnAgentParams, QAgent, QVariant};
use crate::game::{self, CellularGame, GameModel, GameVariant};
use crate::math;
use crate::rate_model::{self, UserRates};
use crate::scenario::{self, ConfigError, ScenarioConfig, MBS};
use crate::stats;
use crate::wifi::{self, LteFraction, WifiError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Wifi(#[from] WifiError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Rate(#[from] rate_model::RateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Esn,
    QLteuDecoupled,
    QLteDecoupled,
    QLteuCoupled,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Esn, Self::QLteuDecoupled, Self::QLteDecoupled, Self::QLteuCoupled];

    pub fn name(self) -> &'static str {
        match self {
            Self::Esn => "esn",
            Self::QLteuDecoupled => "q_lteu_decoupled",
            Self::QLteDecoupled => "q_lte_decoupled",
            Self::QLteuCoupled => "q_lteu_coupled",
        }
    }

    pub fn game_variant(self) -> GameVariant {
        match self {
            Self::Esn => GameVariant::LTEU_DECOUPLED,
            Self::QLteuDecoupled => QVariant::LteuDecoupled.game_variant(),
            Self::QLteDecoupled => QVariant::LteDecoupled.game_variant(),
            Self::QLteuCoupled => QVariant::LteuCoupled.game_variant(),
        }
    }

    fn q_variant(self) -> Option<QVariant> {
        match self {
            Self::Esn => None,
            Self::QLteuDecoupled => Some(QVariant::LteuDecoupled),
            Self::QLteDecoupled => Some(QVariant::LteDecoupled),
            Self::QLteuCoupled => Some(QVariant::LteuCoupled),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown algorithm `{0}`")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| UnknownAlgorithm(s.into()))
    }
}

/// One BS's learning trace for a round. Fields a learner does not have are
/// NaN: Q-learners report their reward as `e_alpha` and the pre-update
/// Q-value as `r_alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub bs: usize,
    pub action: usize,
    pub best_action: usize,
    pub e_alpha: f64,
    pub r_alpha: f64,
    pub e_beta: f64,
    pub r_beta: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub joint_action: Vec<usize>,
    pub utilities: Vec<f64>,
    pub total_reward: f64,
    /// Profile of announced best actions and its total utility; this is what
    /// convergence is judged on, since exploration keeps the played profile
    /// moving forever.
    pub best_profile: Vec<usize>,
    pub best_total_reward: f64,
    pub user_rates: Option<UserRates>,
    pub messages: Vec<BroadcastMsg>,
    pub traces: Vec<AgentTrace>,
}

/// A learner of either kind.
#[derive(Debug, Clone)]
pub enum Learner {
    Esn(EsnAgent),
    Q(QAgent),
}

impl Learner {
    pub fn select(&mut self) -> BroadcastMsg {
        match self {
            Self::Esn(a) => a.select(),
            Self::Q(a) => a.select(),
        }
    }

    /// The action the learner currently rates highest.
    pub fn greedy_action(&self) -> usize {
        match self {
            Self::Esn(a) => crate::agents::argmax(&a.beta_estimates()),
            Self::Q(a) => crate::agents::argmax(&a.q),
        }
    }

    /// The learner's own estimate of what its greedy action is worth.
    pub fn greedy_value(&self) -> f64 {
        match self {
            Self::Esn(a) => a.beta_estimates().into_iter().fold(f64::NEG_INFINITY, f64::max),
            Self::Q(a) => a.q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn learn<G: GameModel + ?Sized>(&mut self, game: &G, msgs: &[BroadcastMsg], utility: f64) -> Result<AgentTrace, AgentError> {
        Ok(match self {
            Self::Esn(a) => {
                let d = a.learn(game, msgs, utility)?;
                AgentTrace {
                    bs: a.bs,
                    action: d.action,
                    best_action: d.best_action,
                    e_alpha: d.e_alpha,
                    r_alpha: d.r_alpha,
                    e_beta: d.e_beta,
                    r_beta: d.r_beta,
                    utility,
                }
            }
            Self::Q(a) => {
                let d = a.learn(game, msgs)?;
                AgentTrace {
                    bs: a.bs,
                    action: d.action,
                    best_action: d.best_action,
                    e_alpha: d.reward,
                    r_alpha: d.q_before,
                    e_beta: f64::NAN,
                    r_beta: f64::NAN,
                    utility,
                }
            }
        })
    }
}

/// Builds one learner per player of `game`.
pub fn build_learners<G: GameModel + ?Sized>(
    game: &G,
    algorithm: Algorithm,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<Learner>, HarnessError> {
    (0..game.n_players())
        .map(|n| {
            Ok(match algorithm.q_variant() {
                None => Learner::Esn(EsnAgent::new(game, n, &EsnAgentParams::from_config(config), seed)?),
                Some(v) => Learner::Q(QAgent::new(n, game.n_actions(n), config.lambda_q, config.epsilon, v, seed)),
            })
        })
        .collect()
}

/// Stopping rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayLimits {
    pub max_iterations: usize,
    pub window: usize,
    /// Relative tolerance on the range of the best-profile total utility.
    pub tol: f64,
    /// Per-action play count every learner needs before the window counts.
    pub min_visits: usize,
}

impl PlayLimits {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self { max_iterations: config.max_iterations, window: config.convergence_window, tol: config.convergence_tol, min_visits: config.convergence_min_visits }
    }
}

/// Tracks the last `window` rounds of (best-profile reward, association).
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    window: usize,
    tol: f64,
    history: VecDeque<(f64, Vec<usize>)>,
}

impl ConvergenceMonitor {
    pub fn new(window: usize, tol: f64) -> Self {
        Self { window: window.max(1), tol, history: VecDeque::new() }
    }

    /// Records a round; true once the last `window` rounds agree.
    pub fn push(&mut self, total: f64, association: Vec<usize>) -> bool {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back((total, association));
        if self.history.len() < self.window {
            return false;
        }
        let (lo, hi) = self.history.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| (lo.min(*x), hi.max(*x)));
        let scale = math::abs(hi).max(math::abs(lo)).max(1e-12);
        let first = &self.history[0].1;
        (hi - lo) <= self.tol * scale && self.history.iter().all(|(_, a)| a == first)
    }
}

/// Result of a play loop on any game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Play {
    pub records: Vec<RoundRecord>,
    pub converged_at: Option<usize>,
    /// Best profile at the end of play.
    pub final_profile: Vec<usize>,
}

/// Runs synchronous rounds until convergence or the iteration cap.
/// `observe` is called with each round's played joint action and may attach
/// a user-rate snapshot.
pub fn play<G: GameModel + ?Sized>(
    game: &G,
    learners: &mut [Learner],
    limits: &PlayLimits,
    mut observe: impl FnMut(&[usize]) -> Option<UserRates>,
) -> Result<Play, HarnessError> {
    let mut monitor = ConvergenceMonitor::new(limits.window, limits.tol);
    let mut records = Vec::new();
    let mut converged_at = None;
    let mut final_profile: Vec<usize> = learners.iter().map(Learner::greedy_action).collect();
    // Actions each player has yet to play `min_visits` times.
    let mut visits: Vec<Vec<usize>> = (0..game.n_players()).map(|n| vec![0; game.n_actions(n)]).collect();
    let mut unexplored: usize = if limits.min_visits == 0 { 0 } else { visits.iter().map(Vec::len).sum() };
    for t in 1..=limits.max_iterations {
        let messages: Vec<BroadcastMsg> = learners.iter_mut().map(Learner::select).collect();
        let joint: Vec<usize> = messages.iter().map(|m| m.current_action).collect();
        let best: Vec<usize> = messages.iter().map(|m| m.best_action).collect();
        let utilities = game.utilities(&joint);
        let traces = learners
            .iter_mut()
            .map(|l| {
                let n = match l {
                    Learner::Esn(a) => a.bs,
                    Learner::Q(a) => a.bs,
                };
                l.learn(game, &messages, utilities[n])
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (count, &a) in visits.iter_mut().zip(&joint) {
            count[a] += 1;
            if count[a] == limits.min_visits {
                unexplored -= 1;
            }
        }
        let best_total: f64 = game.utilities(&best).iter().sum();
        let stable = monitor.push(best_total, game.association_key(&best));
        let done = stable && unexplored == 0;
        records.push(RoundRecord {
            t,
            total_reward: utilities.iter().sum(),
            user_rates: observe(&joint),
            joint_action: joint,
            utilities,
            best_profile: best.clone(),
            best_total_reward: best_total,
            messages,
            traces,
        });
        final_profile = best;
        if done {
            converged_at = Some(t);
            break;
        }
    }
    Ok(Play { records, converged_at, final_profile })
}

/// Network-level outcome metrics of a rate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sum_rate: f64,
    pub sum_rate_dl: f64,
    pub sum_rate_ul: f64,
    /// 50th percentile of per-user (DL + UL) rates.
    pub median_user_rate: f64,
    /// Per-user DL + UL rates, ascending.
    pub rate_samples: Vec<f64>,
    pub per_bs_utility: Vec<f64>,
    /// Users whose DL and UL are served by different BSs.
    pub decoupled_users: usize,
}

impl Metrics {
    pub fn from_rates(rates: &UserRates, per_bs_utility: Vec<f64>) -> Self {
        let rate_samples = stats::sorted(&rates.totals());
        Self {
            sum_rate: rates.sum_rate(),
            sum_rate_dl: rates.r_dl.iter().sum(),
            sum_rate_ul: rates.r_ul.iter().sum(),
            median_user_rate: stats::percentile_sorted(&rate_samples, 50.0),
            rate_samples,
            per_bs_utility,
            decoupled_users: rates.decoupled_users(),
        }
    }
}

/// Per-run audit counters; all zero (and `wifi_guarantee` true) in a healthy
/// run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub wifi_guarantee: bool,
    /// Executed joint actions that failed validation or single association.
    pub feasibility_violations: usize,
    /// Largest deviation between recorded utilities and an independent
    /// recomputation from the resolved actions.
    pub max_reward_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub lte: LteFraction,
    pub records: Vec<RoundRecord>,
    pub converged_at: Option<usize>,
    pub final_profile: Vec<usize>,
    pub final_rates: UserRates,
    pub metrics: Metrics,
    pub audit: Audit,
}

/// Utilities of `joint` recomputed from scratch through the generic
/// conflict-resolution and utility functions.
pub fn recompute_utilities(game: &CellularGame, joint: &[usize]) -> (Vec<f64>, Vec<game::AllocationAction>, rate_model::LinkCapacitySet) {
    let raw = game.raw_actions(joint);
    let pre = game.capacity().capacities_for(raw.iter());
    let resolved = game::resolve_conflicts(&raw, &pre, game.is_coupled());
    let caps = game.capacity().capacities_for(resolved.iter());
    let utilities = (0..raw.len())
        .map(|n| {
            if n == MBS {
                game::mbs_utility(&resolved, &caps, game.rate_unit_bps())
            } else {
                game::sbs_utility(n, &resolved, &caps, game.eta(), game.rate_unit_bps())
            }
        })
        .collect();
    (utilities, resolved, caps)
}

/// Builds the scenario for `seed`, plays `algorithm` on it and scores the
/// final best profile.
pub fn run(config: &ScenarioConfig, algorithm: Algorithm, seed: u64) -> Result<RunResult, HarnessError> {
    run_with_learners(config, algorithm, seed).map(|(result, _)| result)
}

/// [`run`], also handing back the trained learners.
pub fn run_with_learners(
    config: &ScenarioConfig,
    algorithm: Algorithm,
    seed: u64,
) -> Result<(RunResult, Vec<Learner>), HarnessError> {
    config.validate()?;
    let lte = wifi::network_lte_fraction(config)?;
    let topology = scenario::generate_topology(config, seed);
    let channel = scenario::draw_channel(&topology, config, seed);
    let game = CellularGame::new(config, &topology, channel, lte.fraction, algorithm.game_variant(), seed);
    let mut learners = build_learners(&game, algorithm, config, seed)?;

    let mut feasibility_violations = 0;
    let mut max_reward_error: f64 = 0.0;
    let mut audit_round = |joint: &[usize]| -> Option<UserRates> {
        let (utilities, resolved, caps) = recompute_utilities(&game, joint);
        let fast = game.utilities(joint);
        for (a, b) in fast.iter().zip(&utilities) {
            max_reward_error = max_reward_error.max(math::abs(a - b));
        }
        let valid = resolved.iter().all(|a| game::validate_action(a, config.z_levels).is_ok());
        match rate_model::compute_user_rates(&resolved, &caps) {
            Ok(rates) if valid => Some(rates),
            Ok(rates) => {
                feasibility_violations += 1;
                Some(rates)
            }
            Err(_) => {
                feasibility_violations += 1;
                None
            }
        }
    };
    let limits = PlayLimits::from_config(config);
    let played = play(&game, &mut learners, &limits, &mut audit_round)?;
    let final_rates = game.user_rates(&played.final_profile)?;
    let metrics = Metrics::from_rates(&final_rates, game.utilities(&played.final_profile));
    let result = RunResult {
        algorithm,
        seed,
        config: config.clone(),
        lte,
        records: played.records,
        converged_at: played.converged_at,
        final_profile: played.final_profile,
        final_rates,
        metrics,
        // an overloaded WiFi cell mutes LTE-U entirely, which is the best
        // the duty cycle can do
        audit: Audit { wifi_guarantee: lte.guarantee_holds() || lte.overload, feasibility_violations, max_reward_error },
    };
    Ok((result, learners))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::MatrixGame;
    use alloc::vec;

    fn desk_config() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.n_sbs = 2;
        c.n_users = 6;
        c.reservoir_units = 30;
        c.action_set_size = 8;
        c.max_iterations = 300;
        c
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sarsa".parse::<Algorithm>().is_err());
    }

    #[test]
    fn zero_iterations_gives_empty_run() {
        let mut c = desk_config();
        c.max_iterations = 0;
        let r = run(&c, Algorithm::Esn, 1).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.converged_at, None);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = desk_config();
        for alg in Algorithm::ALL {
            let a = run(&c, alg, 4).unwrap();
            let b = run(&c, alg, 4).unwrap();
            // Q-learner traces carry NaN placeholders, so compare renderings
            assert_eq!(alloc::format!("{a:?}"), alloc::format!("{b:?}"));
        }
    }

    #[test]
    fn audits_are_clean() {
        let c = desk_config();
        for alg in Algorithm::ALL {
            let r = run(&c, alg, 2).unwrap();
            assert!(r.audit.wifi_guarantee);
            assert_eq!(r.audit.feasibility_violations, 0);
            assert!(r.audit.max_reward_error <= 1e-9);
            assert!(r.converged_at.is_none_or(|t| t <= c.max_iterations));
            let m = Metrics::from_rates(&r.final_rates, r.metrics.per_bs_utility.clone());
            assert_eq!(m, r.metrics);
        }
    }

    #[test]
    fn single_bs_converges_to_better_action() {
        // The stability window has to outlast a few explorations of the
        // better action, or an early lock-in on the worse one is declared
        // converged.
        let g = MatrixGame::new(vec![2], vec![vec![1.0, 3.0]]).unwrap();
        let mut c = desk_config();
        c.epsilon = 0.2;
        let limits = PlayLimits { max_iterations: 3000, window: 200, tol: 1e-3, min_visits: 1 };
        for alg in [Algorithm::Esn, Algorithm::QLteuDecoupled] {
            for seed in 0..10 {
                let mut learners = build_learners(&g, alg, &c, seed).unwrap();
                let p = play(&g, &mut learners, &limits, |_| None).unwrap();
                assert!(p.converged_at.is_some(), "{alg}");
                assert_eq!(p.final_profile, vec![1], "{alg} seed {seed}");
            }
        }
    }

    #[test]
    fn monitor_requires_a_full_stable_window() {
        let mut m = ConvergenceMonitor::new(3, 1e-3);
        assert!(!m.push(10.0, vec![1]));
        assert!(!m.push(10.0, vec![1]));
        assert!(m.push(10.001, vec![1]));
        assert!(!m.push(10.0, vec![2]));
        assert!(!m.push(10.0, vec![2]));
        assert!(m.push(10.0, vec![2]));
        assert!(!m.push(11.0, vec![2]));
    }
}
