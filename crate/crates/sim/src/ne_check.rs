//! Learn on a small game with the ESN agents, then test the learned profile
//! for equilibrium by full enumeration.
//!
//! The learned profile is every BS's broadcast best action wrapped in the
//! ε-greedy law. A BS deviating within that family moves its peak from `p`
//! to `a` and gains `(1 - ε) (E[u(a)] - E[u(p)])`; the check accepts the
//! profile when that gain stays within `(1 - ε) * rel_gap * max_a |E[u(a)]|`
//! for every BS.

use lteu_core::game::{self, CellularGame, GameError, GameModel, MixedStrategy};
use lteu_core::harness::{build_learners, play, Algorithm, HarnessError, PlayLimits};
use lteu_core::{scenario, wifi, ScenarioConfig};
use serde::Serialize;

/// Default relative value gap tolerated between the peak and the best
/// alternative.
pub const DEFAULT_REL_GAP: f64 = 0.05;

/// Default number of rounds played before checking. The stopping rule
/// fires once the best profile settles, which can be well before the
/// expected-value estimates behind it are accurate.
pub const DEFAULT_HORIZON: usize = 5000;

/// Enumeration budget for expected utilities.
const ENUMERATION_CAP: u128 = 1 << 24;

#[derive(Debug, thiserror::Error)]
pub enum NeCheckError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlayerGap {
    pub player: usize,
    pub peak: usize,
    pub peak_value: f64,
    pub best_action: usize,
    pub best_value: f64,
    /// Gain of moving the ε-greedy peak to `best_action`.
    pub gain: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Per-player deviation gaps of the ε-greedy profile peaked at `peaks`.
pub fn epsilon_greedy_gaps<G: GameModel + ?Sized>(
    game: &G,
    peaks: &[usize],
    epsilon: f64,
    rel_gap: f64,
) -> Result<Vec<PlayerGap>, GameError> {
    let profile: Vec<MixedStrategy> = peaks
        .iter()
        .enumerate()
        .map(|(n, &p)| MixedStrategy::epsilon_greedy(game.n_actions(n), p, epsilon))
        .collect();
    (0..game.n_players())
        .map(|player| {
            let values = game::action_values(game, player, &profile, ENUMERATION_CAP)?;
            let best_action = lteu_core::agents::argmax(&values);
            let peak = peaks[player];
            let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let gain = (1.0 - epsilon) * (values[best_action] - values[peak]);
            let tolerance = (1.0 - epsilon) * rel_gap * scale;
            Ok(PlayerGap {
                player,
                peak,
                peak_value: values[peak],
                best_action,
                best_value: values[best_action],
                gain,
                tolerance,
                passed: gain <= tolerance,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeCheck {
    pub seed: u64,
    pub action_counts: Vec<usize>,
    pub rounds: usize,
    pub converged_at: Option<usize>,
    pub peaks: Vec<usize>,
    pub epsilon: f64,
    pub players: Vec<PlayerGap>,
    /// Largest gain of any unrestricted pure deviation from the ε-greedy
    /// profile, for reference.
    pub unrestricted_gain: f64,
    pub passed: bool,
}

/// Runs the ESN learners on `game` and checks the result. With a
/// `horizon` exactly that many rounds are played; otherwise `config`'s
/// stopping rule applies.
pub fn learn_and_check<G: GameModel + ?Sized>(
    game: &G,
    config: &ScenarioConfig,
    seed: u64,
    horizon: Option<usize>,
    rel_gap: f64,
) -> Result<NeCheck, NeCheckError> {
    let limits = match horizon {
        // a window longer than the run never fills
        Some(h) => PlayLimits { max_iterations: h, window: h + 1, tol: 0.0, min_visits: 0 },
        None => PlayLimits::from_config(config),
    };
    let mut learners = build_learners(game, Algorithm::Esn, config, seed)?;
    let played = play(game, &mut learners, &limits, |_| None)?;
    let peaks = played.final_profile;
    let players = epsilon_greedy_gaps(game, &peaks, config.epsilon, rel_gap)?;
    let profile: Vec<MixedStrategy> = peaks
        .iter()
        .enumerate()
        .map(|(n, &p)| MixedStrategy::epsilon_greedy(game.n_actions(n), p, config.epsilon))
        .collect();
    let report = game::verify_mixed_ne(game, &profile, f64::INFINITY, ENUMERATION_CAP)?;
    Ok(NeCheck {
        seed,
        action_counts: (0..game.n_players()).map(|n| game.n_actions(n)).collect(),
        rounds: played.records.len(),
        converged_at: played.converged_at,
        peaks,
        epsilon: config.epsilon,
        passed: players.iter().all(|p| p.passed),
        players,
        unrestricted_gain: report.best_deviation.map_or(0.0, |d| d.gain),
    })
}

/// A tiny cellular instance derived from `base`: 2 or 3 BSs (alternating
/// with the seed), a compact cell so small cells actually cover users, at
/// most 6 actions per BS and an expectation budget that keeps every
/// expected reward exact.
pub fn tiny_config(base: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_sbs: 1 + (seed % 2) as usize,
        n_users: 4,
        macro_radius_m: 150.0,
        action_set_size: base.action_set_size.min(6),
        expectation_budget: base.expectation_budget.max(64),
        ..base.clone()
    }
}

pub fn tiny_cellular_game(config: &ScenarioConfig, seed: u64) -> Result<CellularGame, HarnessError> {
    config.validate()?;
    let lte = wifi::network_lte_fraction(config)?;
    let topology = scenario::generate_topology(config, seed);
    let channel = scenario::draw_channel(&topology, config, seed);
    Ok(CellularGame::new(config, &topology, channel, lte.fraction, Algorithm::Esn.game_variant(), seed))
}

/// [`learn_and_check`] on the tiny cellular game of `seed`.
pub fn cellular_ne_check(
    base: &ScenarioConfig,
    seed: u64,
    horizon: Option<usize>,
    rel_gap: f64,
) -> Result<NeCheck, NeCheckError> {
    let config = tiny_config(base, seed);
    let game = tiny_cellular_game(&config, seed)?;
    learn_and_check(&game, &config, seed, horizon, rel_gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lteu_core::MatrixGame;

    #[test]
    fn dominant_peak_passes_and_dominated_peak_fails() {
        // action 1 is strictly dominant for both players
        let g = MatrixGame::from_fn(vec![2, 2], |n, joint| if joint[n] == 1 { 10.0 } else { 1.0 });
        let good = epsilon_greedy_gaps(&g, &[1, 1], 0.7, 0.05).unwrap();
        assert!(good.iter().all(|p| p.passed && p.gain == 0.0));
        let bad = epsilon_greedy_gaps(&g, &[0, 1], 0.7, 0.05).unwrap();
        assert!(!bad[0].passed && bad[1].passed);
        assert!((bad[0].gain - 0.3 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn learners_find_the_dominant_action() {
        let g = MatrixGame::from_fn(vec![3, 3], |n, joint| [1.0, 4.0, 2.0][joint[n]] + 0.1 * joint[1 - n] as f64);
        let check = learn_and_check(&g, &ScenarioConfig::default(), 3, Some(1500), DEFAULT_REL_GAP).unwrap();
        assert_eq!((check.rounds, check.converged_at), (1500, None));
        assert_eq!(check.peaks, vec![1, 1]);
        assert!(check.passed);
    }

    #[test]
    fn tiny_configs_stay_tiny() {
        for seed in 0..4 {
            let c = tiny_config(&ScenarioConfig::default(), seed);
            let g = tiny_cellular_game(&c, seed).unwrap();
            assert!((2..=3).contains(&g.n_players()));
            assert!((0..g.n_players()).all(|n| g.n_actions(n) <= 6));
        }
    }
}
