//! Learning agents. Each BS runs one agent; a round has two phases:
//! every agent first picks and broadcasts an action, then, once all
//! broadcasts are in, every agent learns from the joint outcome.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::esn::{self, EsnError, EsnParams, LearningRate, Readout, Reservoir};
use crate::game::{self, Expectation, GameError, GameModel, GameVariant, MixedStrategy};
use crate::math;
use crate::rng::{self, SimRng};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("no broadcast received from BS {0}")]
    MissingMessage(usize),
    #[error("BS {0} broadcast more than once")]
    DuplicateMessage(usize),
    #[error("BS {sender} broadcast action {action}, its space has {n_actions}")]
    InvalidAction { sender: usize, action: usize, n_actions: usize },
    #[error(transparent)]
    Esn(#[from] EsnError),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// What a BS tells the others each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastMsg {
    pub sender: usize,
    pub current_action: usize,
    /// The action with the highest estimated reward.
    pub best_action: usize,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `1 - eps` returns `best`, otherwise a uniform draw over
/// all `n` actions (which may again be `best`).
pub fn select_epsilon_greedy(n: usize, best: usize, epsilon: f64, rng: &mut SimRng) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..n)
    } else {
        best
    }
}

/// Orders the round's messages by sender and checks one per player.
pub fn collect_messages(msgs: &[BroadcastMsg], sizes: &[usize]) -> Result<Vec<BroadcastMsg>, AgentError> {
    let mut slots: Vec<Option<BroadcastMsg>> = vec![None; sizes.len()];
    for m in msgs {
        let n_actions = *sizes.get(m.sender).ok_or(AgentError::MissingMessage(m.sender))?;
        for action in [m.current_action, m.best_action] {
            if action >= n_actions {
                return Err(AgentError::InvalidAction { sender: m.sender, action, n_actions });
            }
        }
        if slots[m.sender].replace(*m).is_some() {
            return Err(AgentError::DuplicateMessage(m.sender));
        }
    }
    slots.into_iter().enumerate().map(|(n, m)| m.ok_or(AgentError::MissingMessage(n))).collect()
}

/// Opponent strategies reconstructed from broadcasts: each opponent is taken
/// to play the epsilon-greedy law peaked at its announced best action. The
/// entry for `own` is a placeholder point mass and is never read.
pub fn build_opponent_model(
    own: usize,
    msgs: &[BroadcastMsg],
    sizes: &[usize],
    epsilon: f64,
) -> Result<Vec<MixedStrategy>, AgentError> {
    let ordered = collect_messages(msgs, sizes)?;
    Ok(ordered
        .iter()
        .enumerate()
        .map(|(n, m)| {
            if n == own {
                MixedStrategy::point_mass(sizes[n], m.current_action)
            } else {
                MixedStrategy::epsilon_greedy(sizes[n], m.best_action, epsilon)
            }
        })
        .collect())
}

/// Reward target of the utility-approximating network: the realized
/// utility of the BS at the joint action.
pub fn esn_alpha_target<G: GameModel + ?Sized>(game: &G, bs: usize, joint: &[usize]) -> f64 {
    game.utility(bs, joint)
}

/// Hyperparameters shared by all ESN agents of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnAgentParams {
    pub n_units: usize,
    pub density: f64,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub epsilon: f64,
    pub alpha_rate: LearningRate,
    pub beta_rate: LearningRate,
    pub expectation_budget: usize,
}

impl EsnAgentParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            n_units: config.reservoir_units,
            density: config.reservoir_density,
            spectral_radius: config.spectral_radius,
            input_scaling: config.input_scaling,
            epsilon: config.epsilon,
            alpha_rate: LearningRate::Fixed(config.lambda_alpha),
            beta_rate: LearningRate::Fixed(config.lambda_beta),
            expectation_budget: config.expectation_budget,
        }
    }
}

/// Per-round learning trace of one ESN agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnDiagnostics {
    pub action: usize,
    pub best_action: usize,
    pub e_alpha: f64,
    /// Prediction for the played action before this round's update.
    pub r_alpha: f64,
    pub e_beta: f64,
    pub e_beta_std_error: f64,
    pub r_beta: f64,
}

/// Where one opponent's action features sit inside the ESN-alpha input.
#[derive(Debug, Clone, PartialEq)]
struct InputBlock {
    player: usize,
    offset: usize,
    width: usize,
}

/// The two-network agent.
///
/// ESN-alpha sees the opponents' current actions and learns the realized
/// utility of each own action. ESN-beta sees the user association of the announced best profile and
/// learns each action's utility in expectation over the opponents' announced
/// strategies, computed by querying ESN-alpha. Actions are chosen
/// epsilon-greedily on ESN-beta's estimates.
#[derive(Debug, Clone)]
pub struct EsnAgent {
    pub bs: usize,
    pub n_actions: usize,
    pub epsilon: f64,
    pub alpha_reservoir: Reservoir,
    pub alpha_readout: Readout,
    pub beta_reservoir: Reservoir,
    pub beta_readout: Readout,
    pub opponent_model: Vec<MixedStrategy>,
    pub last_action: usize,
    pub best_action: usize,
    pub iteration: u64,
    expectation_budget: usize,
    blocks: Vec<InputBlock>,
    /// `W_in` contribution of each opponent action: `drives[block][action]`.
    drives: Vec<Vec<Vec<f64>>>,
    bias_drive: Vec<f64>,
    /// Current ESN-beta input (scaled association indicators, then bias).
    x_beta: Vec<f64>,
    policy_rng: SimRng,
    expectation_rng: SimRng,
}

/// `W_in` contribution of every opponent action and of the bias input.
fn cached_drives<G: GameModel + ?Sized>(
    game: &G,
    reservoir: &Reservoir,
    blocks: &[InputBlock],
) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let drives = blocks
        .iter()
        .map(|b| {
            (0..game.n_actions(b.player))
                .map(|a| {
                    let mut d = vec![0.0; reservoir.n_units];
                    reservoir.accumulate_input_block(game.action_features(b.player, a), b.offset, &mut d);
                    d
                })
                .collect()
        })
        .collect();
    let mut bias_drive = vec![0.0; reservoir.n_units];
    reservoir.accumulate_input_block(&[1.0], reservoir.input_dim - 1, &mut bias_drive);
    (drives, bias_drive)
}

impl EsnAgent {
    pub fn new<G: GameModel + ?Sized>(game: &G, bs: usize, params: &EsnAgentParams, seed: u64) -> Result<Self, AgentError> {
        let n_actions = game.n_actions(bs);
        let mut blocks = Vec::new();
        let mut offset = 0;
        for m in (0..game.n_players()).filter(|&m| m != bs) {
            let width = game.action_features(m, 0).len();
            blocks.push(InputBlock { player: m, offset, width });
            offset += width;
        }
        let alpha_dim = offset + 1;
        let beta_dim = game.association_width(bs) + 1;
        let esn_params = |input_dim, rule| EsnParams {
            n_units: params.n_units,
            input_dim,
            n_actions,
            density: params.density,
            spectral_radius: params.spectral_radius,
            input_scaling: params.input_scaling,
            rule,
        };
        let (alpha_reservoir, alpha_readout) = esn::init(
            &esn_params(alpha_dim, params.alpha_rate),
            rng::derive_seed(seed, rng::tag::ESN_ALPHA, bs as u64),
        )?;
        let (beta_reservoir, beta_readout) = esn::init(
            &esn_params(beta_dim, params.beta_rate),
            rng::derive_seed(seed, rng::tag::ESN_BETA, bs as u64),
        )?;
        let (drives, bias_drive) = cached_drives(game, &alpha_reservoir, &blocks);
        let mut x_beta = vec![0.0; beta_dim];
        x_beta[beta_dim - 1] = 1.0;
        let sizes: Vec<usize> = (0..game.n_players()).map(|m| game.n_actions(m)).collect();
        let opponent_model = sizes.iter().map(|&s| MixedStrategy::uniform(s)).collect();
        Ok(Self {
            bs,
            n_actions,
            epsilon: params.epsilon,
            alpha_reservoir,
            alpha_readout,
            beta_reservoir,
            beta_readout,
            opponent_model,
            last_action: 0,
            best_action: 0,
            iteration: 0,
            expectation_budget: params.expectation_budget,
            blocks,
            drives,
            bias_drive,
            x_beta,
            policy_rng: rng::stream(seed, rng::tag::POLICY, bs as u64),
            expectation_rng: rng::stream(seed, rng::tag::EXPECTATION, bs as u64),
        })
    }

    /// Swaps in previously saved networks (same shapes as this agent's) and
    /// the ESN-beta input they last saw, then re-derives the cached input
    /// drives and the greedy action.
    pub fn restore<G: GameModel + ?Sized>(
        &mut self,
        game: &G,
        alpha: (Reservoir, Readout),
        beta: (Reservoir, Readout),
        beta_input: &[f64],
    ) -> Result<(), AgentError> {
        let same = |r: &Reservoir, o: &Readout, cur_r: &Reservoir, cur_o: &Readout| {
            r.n_units == cur_r.n_units
                && r.input_dim == cur_r.input_dim
                && r.state.len() == r.n_units
                && o.n_actions == cur_o.n_actions
                && o.width == cur_o.width
                && o.w_out.len() == o.n_actions * o.width
        };
        if !same(&alpha.0, &alpha.1, &self.alpha_reservoir, &self.alpha_readout)
            || !same(&beta.0, &beta.1, &self.beta_reservoir, &self.beta_readout)
            || beta_input.len() != self.x_beta.len()
        {
            return Err(AgentError::Esn(EsnError::InvalidParameter("saved networks do not match the agent's shapes")));
        }
        (self.alpha_reservoir, self.alpha_readout) = alpha;
        (self.beta_reservoir, self.beta_readout) = beta;
        self.x_beta.copy_from_slice(beta_input);
        (self.drives, self.bias_drive) = cached_drives(game, &self.alpha_reservoir, &self.blocks);
        self.best_action = argmax(&self.beta_estimates());
        Ok(())
    }

    /// The input ESN-beta saw last.
    pub fn beta_input(&self) -> &[f64] {
        &self.x_beta
    }

    /// ESN-beta's current estimate for every action.
    pub fn beta_estimates(&self) -> Vec<f64> {
        self.beta_readout
            .predict_all(&self.beta_reservoir.state, &self.x_beta)
            .expect("dimensions fixed at construction")
    }

    /// First phase of a round: choose and announce an action.
    pub fn select(&mut self) -> BroadcastMsg {
        self.best_action = argmax(&self.beta_estimates());
        self.last_action = select_epsilon_greedy(self.n_actions, self.best_action, self.epsilon, &mut self.policy_rng);
        BroadcastMsg { sender: self.bs, current_action: self.last_action, best_action: self.best_action }
    }

    fn alpha_input(&self, joint: &[usize], game: &(impl GameModel + ?Sized)) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.alpha_reservoir.input_dim);
        for b in &self.blocks {
            x.extend_from_slice(game.action_features(b.player, joint[b.player]));
        }
        x.push(1.0);
        x
    }

    /// ESN-alpha's prediction for `action` if the opponents played `joint`
    /// this round, without committing the reservoir state. `recurrent` is
    /// `W mu` of the state the round started from.
    fn probe_alpha<G: GameModel + ?Sized>(&self, game: &G, recurrent: &[f64], joint: &[usize], action: usize) -> f64 {
        let n = self.alpha_reservoir.n_units;
        let row = self.alpha_readout.row(action);
        let mut pre: Vec<f64> = recurrent.iter().zip(&self.bias_drive).map(|(r, b)| r + b).collect();
        let mut linear = row[row.len() - 1];
        for (b, drives) in self.blocks.iter().zip(&self.drives) {
            let a = joint[b.player];
            for (p, d) in pre.iter_mut().zip(&drives[a]) {
                *p += d;
            }
            linear += math::dot(&row[n + b.offset..n + b.offset + b.width], game.action_features(b.player, a));
        }
        let state_part: f64 = pre.iter().zip(&row[..n]).map(|(p, w)| math::tanh(*p) * w).sum();
        state_part + linear
    }

    /// Expected ESN-alpha prediction for `action` over the opponent model:
    /// exact when the opponents' joint support fits the budget, Monte-Carlo
    /// otherwise.
    pub fn esn_beta_target<G: GameModel + ?Sized>(&mut self, game: &G, action: usize) -> Result<Expectation, AgentError> {
        let recurrent = self.alpha_reservoir.recurrent_drive();
        self.beta_target_from(game, action, &recurrent)
    }

    fn beta_target_from<G: GameModel + ?Sized>(&mut self, game: &G, action: usize, recurrent: &[f64]) -> Result<Expectation, AgentError> {
        let mut rng = self.expectation_rng.clone();
        let out = game::expected_value(self.bs, action, &self.opponent_model, self.expectation_budget, &mut rng, |joint| {
            self.probe_alpha(game, recurrent, joint, action)
        })?;
        self.expectation_rng = rng;
        Ok(out)
    }

    /// Second phase of a round: learn from the round's broadcasts.
    /// `realized_utility` is this BS's utility at the executed joint action.
    pub fn learn<G: GameModel + ?Sized>(
        &mut self,
        game: &G,
        msgs: &[BroadcastMsg],
        realized_utility: f64,
    ) -> Result<EsnDiagnostics, AgentError> {
        let sizes: Vec<usize> = (0..game.n_players()).map(|m| game.n_actions(m)).collect();
        let ordered = collect_messages(msgs, &sizes)?;
        let joint: Vec<usize> = ordered.iter().map(|m| m.current_action).collect();
        self.opponent_model = build_opponent_model(self.bs, msgs, &sizes, self.epsilon)?;
        self.iteration += 1;
        let t = self.iteration;
        let action = self.last_action;

        let recurrent = self.alpha_reservoir.recurrent_drive();
        let x_alpha = self.alpha_input(&joint, game);
        self.alpha_reservoir.update(&x_alpha)?;
        let r_alpha = self.alpha_readout.train_step(&self.alpha_reservoir.state, &x_alpha, action, realized_utility, t)?;

        let e_beta = self.beta_target_from(game, action, &recurrent)?;

        // The association of the announced best profile, not of the explored
        // one: exploration would otherwise make the input pure noise.
        let best: Vec<usize> = ordered.iter().map(|m| m.best_action).collect();
        let assoc = game.association_features(self.bs, &best);
        let scale = 1.0 / math::sqrt(assoc.len().max(1) as f64);
        for (x, a) in self.x_beta.iter_mut().zip(&assoc) {
            *x = a * scale;
        }
        self.beta_reservoir.update(&self.x_beta)?;
        let r_beta = self.beta_readout.train_step(&self.beta_reservoir.state, &self.x_beta, action, e_beta.value, t)?;

        Ok(EsnDiagnostics {
            action,
            best_action: self.best_action,
            e_alpha: realized_utility,
            r_alpha,
            e_beta: e_beta.value,
            e_beta_std_error: e_beta.std_error,
            r_beta,
        })
    }
}

/// The Q-learning baselines differ only in the game they play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QVariant {
    /// Licensed and unlicensed bands, decoupled association.
    LteuDecoupled,
    /// Licensed band only, decoupled association.
    LteDecoupled,
    /// Both bands, each user served by one BS in both directions.
    LteuCoupled,
}

impl QVariant {
    pub fn game_variant(self) -> GameVariant {
        match self {
            Self::LteuDecoupled => GameVariant::LTEU_DECOUPLED,
            Self::LteDecoupled => GameVariant::LTE_DECOUPLED,
            Self::LteuCoupled => GameVariant::LTEU_COUPLED,
        }
    }
}

/// `(1 - lambda) q + lambda u`.
#[inline]
pub fn q_update(q: f64, lambda: f64, utility: f64) -> f64 {
    (1.0 - lambda) * q + lambda * utility
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QDiagnostics {
    pub action: usize,
    pub best_action: usize,
    /// Utility of the played action against the opponents' best actions.
    pub reward: f64,
    pub q_before: f64,
    pub q_after: f64,
}

/// Stateless Q-learner: one value per action, updated with the utility the
/// action earns against the other BSs' announced best actions.
#[derive(Debug, Clone)]
pub struct QAgent {
    pub bs: usize,
    pub q: Vec<f64>,
    pub lambda_q: f64,
    pub epsilon: f64,
    pub variant: QVariant,
    pub last_action: usize,
    pub best_action: usize,
    rng: SimRng,
}

impl QAgent {
    pub fn new(bs: usize, n_actions: usize, lambda_q: f64, epsilon: f64, variant: QVariant, seed: u64) -> Self {
        Self {
            bs,
            q: vec![0.0; n_actions],
            lambda_q,
            epsilon,
            variant,
            last_action: 0,
            best_action: 0,
            rng: rng::stream(seed, rng::tag::POLICY, bs as u64),
        }
    }

    pub fn select(&mut self) -> BroadcastMsg {
        self.best_action = argmax(&self.q);
        self.last_action = select_epsilon_greedy(self.q.len(), self.best_action, self.epsilon, &mut self.rng);
        BroadcastMsg { sender: self.bs, current_action: self.last_action, best_action: self.best_action }
    }

    pub fn learn<G: GameModel + ?Sized>(&mut self, game: &G, msgs: &[BroadcastMsg]) -> Result<QDiagnostics, AgentError> {
        let sizes: Vec<usize> = (0..game.n_players()).map(|m| game.n_actions(m)).collect();
        let ordered = collect_messages(msgs, &sizes)?;
        let mut joint: Vec<usize> = ordered.iter().map(|m| m.best_action).collect();
        joint[self.bs] = self.last_action;
        let reward = game.utility(self.bs, &joint);
        let i = self.last_action;
        let q_before = self.q[i];
        self.q[i] = q_update(q_before, self.lambda_q, reward);
        Ok(QDiagnostics { action: i, best_action: self.best_action, reward, q_before, q_after: self.q[i] })
    }
}
