//! The noncooperative allocation game.
//!
//! Players are the base stations. A pure strategy is an [`AllocationAction`]:
//! quantized licensed DL/UL bandwidth fractions and unlicensed DL/UL airtime
//! fractions for every user inside the player's coverage. Utilities are sums
//! of `log2(1 + rate)` terms, which rewards spreading spectrum across users.
//!
//! Per-BS action spaces are generated independently, so two BSs may grant
//! the same user in the same direction. The payoff of a joint action is
//! evaluated on its conflict-resolved form: the BS offering the higher
//! fraction-weighted capacity keeps the user (lower index on ties), every
//! other grant in that direction is dropped.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rate_model::{self, CapacityModel, LinkCapacitySet, RateError, UserRates};
use crate::rng::SimRng;
use crate::scenario::{ChannelRealization, ScenarioConfig, Topology, MBS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("joint enumeration of {size} profiles exceeds the cap of {cap}")]
    InstanceTooLarge { size: u128, cap: u128 },
    #[error("invalid mixed strategy: {0}")]
    InvalidStrategy(&'static str),
    #[error("profile has {got} strategies for {expected} players")]
    PlayerCountMismatch { expected: usize, got: usize },
    #[error("strategy for player {player} has {got} entries, action space has {expected}")]
    ActionCountMismatch { player: usize, expected: usize, got: usize },
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Tolerance for "on the quantization grid" and for the sum constraints.
const GRID_TOL: f64 = 1e-9;

/// One BS's allocation to the users it covers.
///
/// `kappa` and `tau` are empty for the macro cell, which has no unlicensed
/// carrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationAction {
    pub owner: usize,
    /// Global user ids, one per slot.
    pub users: Vec<usize>,
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub kappa: Vec<f64>,
    pub tau: Vec<f64>,
}

impl AllocationAction {
    pub fn zeros(owner: usize, users: Vec<usize>, licensed_only: bool) -> Self {
        let k = users.len();
        let u = if licensed_only { 0 } else { k };
        Self {
            owner,
            users,
            d: vec![0.0; k],
            v: vec![0.0; k],
            kappa: vec![0.0; u],
            tau: vec![0.0; u],
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn is_licensed_only(&self) -> bool {
        self.kappa.is_empty() && self.tau.is_empty()
    }

    #[inline]
    pub fn kappa_at(&self, slot: usize) -> f64 {
        self.kappa.get(slot).copied().unwrap_or(0.0)
    }

    #[inline]
    pub fn tau_at(&self, slot: usize) -> f64 {
        self.tau.get(slot).copied().unwrap_or(0.0)
    }

    pub fn grants_dl(&self, slot: usize) -> bool {
        self.d[slot] > 0.0 || self.kappa_at(slot) > 0.0
    }

    pub fn grants_ul(&self, slot: usize) -> bool {
        self.v[slot] > 0.0 || self.tau_at(slot) > 0.0
    }

    /// `[d.., v.., kappa.., tau..]`, with zero-filled unlicensed entries for a
    /// licensed-only action.
    pub fn feature_vector(&self) -> Vec<f64> {
        let k = self.n_users();
        let mut out = Vec::with_capacity(4 * k);
        out.extend_from_slice(&self.d);
        out.extend_from_slice(&self.v);
        out.extend((0..k).map(|s| self.kappa_at(s)));
        out.extend((0..k).map(|s| self.tau_at(s)));
        out
    }

    fn drop_dl(&mut self, slot: usize) {
        self.d[slot] = 0.0;
        if let Some(k) = self.kappa.get_mut(slot) {
            *k = 0.0;
        }
    }

    fn drop_ul(&mut self, slot: usize) {
        self.v[slot] = 0.0;
        if let Some(t) = self.tau.get_mut(slot) {
            *t = 0.0;
        }
    }

    fn from_levels(owner: usize, users: &[usize], levels: &ActionLevels, z: u32) -> Self {
        let f = |x: &u8| *x as f64 / z as f64;
        Self {
            owner,
            users: users.to_vec(),
            d: levels.d.iter().map(f).collect(),
            v: levels.v.iter().map(f).collect(),
            kappa: levels.kappa.iter().map(f).collect(),
            tau: levels.tau.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    D,
    V,
    Kappa,
    Tau,
}

/// First violated feasibility constraint of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionViolation {
    LengthMismatch { field: Field, expected: usize, got: usize },
    OffGrid { field: Field, slot: usize, value: f64 },
    LicensedDlSum(f64),
    LicensedUlSum(f64),
    UnlicensedSum(f64),
}

/// Checks quantization, the per-direction licensed budgets and the shared
/// unlicensed airtime budget, in that order.
pub fn validate_action(a: &AllocationAction, z_levels: u32) -> Result<(), ActionViolation> {
    let k = a.users.len();
    for (field, xs) in [(Field::D, &a.d), (Field::V, &a.v)] {
        if xs.len() != k {
            return Err(ActionViolation::LengthMismatch { field, expected: k, got: xs.len() });
        }
    }
    if !a.is_licensed_only() {
        for (field, xs) in [(Field::Kappa, &a.kappa), (Field::Tau, &a.tau)] {
            if xs.len() != k {
                return Err(ActionViolation::LengthMismatch { field, expected: k, got: xs.len() });
            }
        }
    }
    let z = z_levels as f64;
    for (field, xs) in [(Field::D, &a.d), (Field::V, &a.v), (Field::Kappa, &a.kappa), (Field::Tau, &a.tau)] {
        for (slot, &value) in xs.iter().enumerate() {
            let scaled = value * z;
            if !(0.0..=1.0 + GRID_TOL).contains(&value) || math::abs(scaled - math::round(scaled)) > GRID_TOL * z {
                return Err(ActionViolation::OffGrid { field, slot, value });
            }
        }
    }
    let sum_d: f64 = a.d.iter().sum();
    if sum_d > 1.0 + GRID_TOL {
        return Err(ActionViolation::LicensedDlSum(sum_d));
    }
    let sum_v: f64 = a.v.iter().sum();
    if sum_v > 1.0 + GRID_TOL {
        return Err(ActionViolation::LicensedUlSum(sum_v));
    }
    let sum_u: f64 = a.kappa.iter().chain(&a.tau).sum();
    if sum_u > 1.0 + GRID_TOL {
        return Err(ActionViolation::UnlicensedSum(sum_u));
    }
    Ok(())
}

/// Integer grid levels of one action, used for enumeration and dedup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ActionLevels {
    d: Vec<u8>,
    v: Vec<u8>,
    kappa: Vec<u8>,
    tau: Vec<u8>,
}

impl ActionLevels {
    fn zeros(k: usize, licensed_only: bool) -> Self {
        let u = if licensed_only { 0 } else { k };
        Self { d: vec![0; k], v: vec![0; k], kappa: vec![0; u], tau: vec![0; u] }
    }

    fn is_coupled(&self) -> bool {
        (0..self.d.len()).all(|s| self.dl(s) == self.ul(s))
    }

    fn dl(&self, s: usize) -> bool {
        self.d[s] > 0 || self.kappa.get(s).is_some_and(|&x| x > 0)
    }

    fn ul(&self, s: usize) -> bool {
        self.v[s] > 0 || self.tau.get(s).is_some_and(|&x| x > 0)
    }

    /// Drops every user granted in only one direction.
    fn couple(mut self) -> Self {
        for s in 0..self.d.len() {
            if self.dl(s) != self.ul(s) {
                self.d[s] = 0;
                self.v[s] = 0;
                if !self.kappa.is_empty() {
                    self.kappa[s] = 0;
                    self.tau[s] = 0;
                }
            }
        }
        self
    }
}

/// Number of length-`k` nonnegative integer vectors with sum at most `z`,
/// i.e. `C(z + k, k)`, saturating.
pub fn count_bounded_vectors(k: usize, z: u32) -> u128 {
    let mut c: u128 = 1;
    for i in 1..=k as u128 {
        c = match c.checked_mul(z as u128 + i) {
            Some(x) => x / i,
            None => return u128::MAX,
        };
    }
    c
}

/// Size of the full feasible action set of a BS covering `k` users.
pub fn feasible_action_count(k: usize, z: u32, licensed_only: bool) -> u128 {
    let lic = count_bounded_vectors(k, z);
    let unl = if licensed_only { 1 } else { count_bounded_vectors(2 * k, z) };
    lic.saturating_mul(lic).saturating_mul(unl)
}

fn all_bounded_vectors(k: usize, z: u32) -> Vec<Vec<u8>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for x in 0..=left {
            prefix.push(x as u8);
            rec(k, left - x, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, z, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Uniform draw from the length-`k` vectors with sum at most `z` (stars and
/// bars: `k` bar positions among `z + k` slots).
fn sample_bounded_vector(rng: &mut SimRng, k: usize, z: u32) -> Vec<u8> {
    if k == 0 {
        return Vec::new();
    }
    let slots = z as usize + k;
    let mut pool: Vec<usize> = (0..slots).collect();
    for i in 0..k {
        let j = rng.gen_range(i..slots);
        pool.swap(i, j);
    }
    let mut bars = pool[..k].to_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut prev: isize = -1;
    for &b in &bars {
        out.push((b as isize - prev - 1) as u8);
        prev = b as isize;
    }
    out
}

/// The ordered action list of one BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub owner: usize,
    pub users: Vec<usize>,
    pub actions: Vec<AllocationAction>,
    pub generation_seed: u64,
    pub z_levels: u32,
    /// Every action grants each user both directions or neither.
    pub coupled: bool,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Builds the action set of `owner` covering `users`.
    ///
    /// Feasible sets with at most `cap` members are enumerated exhaustively.
    /// Larger ones are sampled uniformly without duplicates; the all-zero
    /// action and one "whole band to this user" action per user always come
    /// first.
    pub fn build(owner: usize, users: Vec<usize>, z_levels: u32, cap: usize, seed: u64, coupled: bool) -> Self {
        let k = users.len();
        let licensed_only = owner == MBS;
        let full = feasible_action_count(k, z_levels, licensed_only);
        let levels = if full <= cap as u128 && !coupled {
            enumerate_levels(k, z_levels, licensed_only)
        } else if coupled && full <= (cap as u128).saturating_mul(256).min(1 << 20) {
            let all: Vec<ActionLevels> = enumerate_levels(k, z_levels, licensed_only)
                .into_iter()
                .filter(ActionLevels::is_coupled)
                .collect();
            if all.len() <= cap {
                all
            } else {
                sample_levels(k, z_levels, licensed_only, cap, seed, coupled)
            }
        } else {
            sample_levels(k, z_levels, licensed_only, cap, seed, coupled)
        };
        let actions = levels
            .iter()
            .map(|l| AllocationAction::from_levels(owner, &users, l, z_levels))
            .collect();
        Self { owner, users, actions, generation_seed: seed, z_levels, coupled }
    }
}

fn enumerate_levels(k: usize, z: u32, licensed_only: bool) -> Vec<ActionLevels> {
    let lic = all_bounded_vectors(k, z);
    let unl: Vec<Vec<u8>> = if licensed_only { vec![Vec::new()] } else { all_bounded_vectors(2 * k, z) };
    let mut out = Vec::with_capacity(lic.len() * lic.len() * unl.len());
    for d in &lic {
        for v in &lic {
            for u in &unl {
                let (kappa, tau) = if licensed_only { (Vec::new(), Vec::new()) } else { (u[..k].to_vec(), u[k..].to_vec()) };
                out.push(ActionLevels { d: d.clone(), v: v.clone(), kappa, tau });
            }
        }
    }
    out
}

fn essential_levels(k: usize, z: u32, licensed_only: bool) -> Vec<ActionLevels> {
    let zz = z as u8;
    let mut out = vec![ActionLevels::zeros(k, licensed_only)];
    for s in 0..k {
        let mut l = ActionLevels::zeros(k, licensed_only);
        l.d[s] = zz;
        l.v[s] = zz;
        if !licensed_only {
            l.kappa[s] = zz / 2;
            l.tau[s] = zz - zz / 2;
        }
        out.push(l);
    }
    out
}

fn sample_levels(k: usize, z: u32, licensed_only: bool, cap: usize, seed: u64, coupled: bool) -> Vec<ActionLevels> {
    let mut rng = crate::rng::stream(seed, crate::rng::tag::ACTIONS, 0);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cap);
    for l in essential_levels(k, z, licensed_only) {
        if out.len() < cap && seen.insert(l.clone()) {
            out.push(l);
        }
    }
    let mut attempts = 0usize;
    while out.len() < cap && attempts < 1000 * cap.max(1) {
        attempts += 1;
        let d = sample_bounded_vector(&mut rng, k, z);
        let v = sample_bounded_vector(&mut rng, k, z);
        let (kappa, tau) = if licensed_only {
            (Vec::new(), Vec::new())
        } else {
            let u = sample_bounded_vector(&mut rng, 2 * k, z);
            (u[..k].to_vec(), u[k..].to_vec())
        };
        let mut l = ActionLevels { d, v, kappa, tau };
        if coupled {
            l = l.couple();
        }
        if seen.insert(l.clone()) {
            out.push(l);
        }
    }
    out
}

/// Action space of `bs` for the users it covers in `topology`.
pub fn enumerate_actions(bs: usize, topology: &Topology, config: &ScenarioConfig, seed: u64) -> ActionSpace {
    let seed = crate::rng::derive_seed(seed, crate::rng::tag::ACTIONS, bs as u64);
    ActionSpace::build(bs, topology.covered_users(bs), config.z_levels, config.action_set_size, seed, false)
}

/// A probability vector over one player's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self, GameError> {
        if probs.is_empty() {
            return Err(GameError::InvalidStrategy("empty probability vector"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(GameError::InvalidStrategy("negative or non-finite probability"));
        }
        let sum: f64 = probs.iter().sum();
        if math::abs(sum - 1.0) > 1e-12 {
            return Err(GameError::InvalidStrategy("probabilities must sum to one"));
        }
        Ok(Self { probs })
    }

    pub fn point_mass(n_actions: usize, action: usize) -> Self {
        let mut probs = vec![0.0; n_actions];
        probs[action] = 1.0;
        Self { probs }
    }

    pub fn uniform(n_actions: usize) -> Self {
        Self { probs: vec![1.0 / n_actions as f64; n_actions] }
    }

    /// `1 - eps + eps/n` on `best`, `eps/n` everywhere else.
    pub fn epsilon_greedy(n_actions: usize, best: usize, epsilon: f64) -> Self {
        let share = epsilon / n_actions as f64;
        let mut probs = vec![share; n_actions];
        probs[best] = 1.0 - epsilon + share;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut SimRng) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left a sliver above the last cumulative sum
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// What the learners and the equilibrium checks need from a game.
pub trait GameModel {
    fn n_players(&self) -> usize;
    fn n_actions(&self, player: usize) -> usize;
    fn utility(&self, player: usize, joint: &[usize]) -> f64;

    fn utilities(&self, joint: &[usize]) -> Vec<f64> {
        (0..self.n_players()).map(|n| self.utility(n, joint)).collect()
    }

    /// Numeric description of `action`, observed by the other players.
    fn action_features(&self, player: usize, action: usize) -> &[f64];

    /// Association indicators of `player`'s users under `joint`: one DL
    /// entry per covered user, then one UL entry per covered user.
    fn association_features(&self, player: usize, joint: &[usize]) -> Vec<f64>;

    /// Width of [`GameModel::association_features`].
    fn association_width(&self, player: usize) -> usize;

    /// Key that changes whenever the user association changes.
    fn association_key(&self, joint: &[usize]) -> Vec<usize> {
        joint.to_vec()
    }
}

/// Game given by explicit payoff tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    sizes: Vec<usize>,
    /// `payoffs[player][flat joint index]`, player 0 most significant.
    payoffs: Vec<Vec<f64>>,
    #[serde(skip)]
    one_hot: Vec<Vec<Vec<f64>>>,
}

impl MatrixGame {
    pub fn new(sizes: Vec<usize>, payoffs: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let total = sizes.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s)).ok_or(GameError::InstanceTooLarge {
            size: u128::MAX,
            cap: usize::MAX as u128,
        })?;
        if payoffs.len() != sizes.len() {
            return Err(GameError::PlayerCountMismatch { expected: sizes.len(), got: payoffs.len() });
        }
        for (player, p) in payoffs.iter().enumerate() {
            if p.len() != total {
                return Err(GameError::ActionCountMismatch { player, expected: total, got: p.len() });
            }
        }
        let one_hot = sizes
            .iter()
            .map(|&n| (0..n).map(|a| (0..n).map(|j| if j == a { 1.0 } else { 0.0 }).collect()).collect())
            .collect();
        Ok(Self { sizes, payoffs, one_hot })
    }

    /// Fills the payoff tensors from `f(player, joint)`.
    pub fn from_fn(sizes: Vec<usize>, mut f: impl FnMut(usize, &[usize]) -> f64) -> Self {
        let n = sizes.len();
        let mut payoffs = vec![Vec::new(); n];
        for_each_profile(&sizes, |joint| {
            for (player, p) in payoffs.iter_mut().enumerate() {
                p.push(f(player, joint));
            }
        });
        Self::new(sizes, payoffs).expect("shapes are consistent by construction")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn payoffs(&self) -> &[Vec<f64>] {
        &self.payoffs
    }

    fn flat(&self, joint: &[usize]) -> usize {
        joint.iter().zip(&self.sizes).fold(0, |acc, (&a, &s)| acc * s + a)
    }
}

impl GameModel for MatrixGame {
    fn n_players(&self) -> usize {
        self.sizes.len()
    }

    fn n_actions(&self, player: usize) -> usize {
        self.sizes[player]
    }

    fn utility(&self, player: usize, joint: &[usize]) -> f64 {
        self.payoffs[player][self.flat(joint)]
    }

    fn action_features(&self, player: usize, action: usize) -> &[f64] {
        &self.one_hot[player][action]
    }

    fn association_features(&self, _player: usize, _joint: &[usize]) -> Vec<f64> {
        Vec::new()
    }

    fn association_width(&self, _player: usize) -> usize {
        0
    }
}

/// Calls `f` on every joint action of the product space, last player
/// fastest.
pub fn for_each_profile(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut joint = vec![0usize; sizes.len()];
    loop {
        f(&joint);
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            joint[i] += 1;
            if joint[i] < sizes[i] {
                break;
            }
            joint[i] = 0;
        }
    }
}

/// Which BS wins each user in each direction after conflict resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Winners {
    pub dl: Vec<Option<usize>>,
    pub ul: Vec<Option<usize>>,
}

/// Picks the serving BS per user and direction. In coupled mode a user's
/// two directions are resolved together on the summed offer.
pub fn conflict_winners(raw: &[&AllocationAction], caps: &LinkCapacitySet, coupled: bool) -> Winners {
    let n = caps.n_users;
    let mut dl: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut ul: Vec<Option<(usize, f64)>> = vec![None; n];
    // Actions are visited in ascending owner order, so only a strictly
    // larger offer replaces the incumbent.
    let mut order: Vec<&AllocationAction> = raw.to_vec();
    order.sort_by_key(|a| a.owner);
    for action in order {
        for (slot, &user) in action.users.iter().enumerate() {
            let (g_dl, g_ul) = (action.grants_dl(slot), action.grants_ul(slot));
            if coupled {
                if g_dl || g_ul {
                    let offer = caps.dl_offer(action, slot) + caps.ul_offer(action, slot);
                    if dl[user].is_none_or(|(_, best)| offer > best) {
                        dl[user] = Some((action.owner, offer));
                    }
                }
                continue;
            }
            if g_dl {
                let offer = caps.dl_offer(action, slot);
                if dl[user].is_none_or(|(_, best)| offer > best) {
                    dl[user] = Some((action.owner, offer));
                }
            }
            if g_ul {
                let offer = caps.ul_offer(action, slot);
                if ul[user].is_none_or(|(_, best)| offer > best) {
                    ul[user] = Some((action.owner, offer));
                }
            }
        }
    }
    if coupled {
        ul = dl.clone();
    }
    Winners {
        dl: dl.into_iter().map(|w| w.map(|(bs, _)| bs)).collect(),
        ul: ul.into_iter().map(|w| w.map(|(bs, _)| bs)).collect(),
    }
}

/// Conflict-free copy of `raw`: per user and direction only the winning
/// BS keeps its grant.
pub fn resolve_conflicts(raw: &[AllocationAction], caps: &LinkCapacitySet, coupled: bool) -> Vec<AllocationAction> {
    let refs: Vec<&AllocationAction> = raw.iter().collect();
    let w = conflict_winners(&refs, caps, coupled);
    apply_winners(raw.iter(), &w)
}

fn apply_winners<'a>(raw: impl Iterator<Item = &'a AllocationAction>, w: &Winners) -> Vec<AllocationAction> {
    raw.map(|a| {
        let mut a = a.clone();
        for slot in 0..a.users.len() {
            let user = a.users[slot];
            if w.dl[user] != Some(a.owner) {
                a.drop_dl(slot);
            }
            if w.ul[user] != Some(a.owner) {
                a.drop_ul(slot);
            }
        }
        a
    })
    .collect()
}

/// Utility of a small cell: DL and UL log-rate terms over its users, with
/// the unlicensed downlink scaled by `eta`. `joint` must be conflict-free.
pub fn sbs_utility(n: usize, joint: &[AllocationAction], caps: &LinkCapacitySet, eta: f64, rate_unit_bps: f64) -> f64 {
    let Some(a) = joint.iter().find(|a| a.owner == n) else {
        return 0.0;
    };
    let mut u = 0.0;
    for (slot, &user) in a.users.iter().enumerate() {
        let dl = a.d[slot] * caps.l_dl(user, n) + eta * a.kappa_at(slot) * caps.u_dl(user, n);
        let ul = a.v[slot] * caps.l_ul(user, n) + a.tau_at(slot) * caps.u_ul(user, n);
        u += math::log2(1.0 + dl / rate_unit_bps) + math::log2(1.0 + ul / rate_unit_bps);
    }
    u
}

/// Utility of the macro cell: licensed terms only.
pub fn mbs_utility(joint: &[AllocationAction], caps: &LinkCapacitySet, rate_unit_bps: f64) -> f64 {
    let Some(a) = joint.iter().find(|a| a.owner == MBS) else {
        return 0.0;
    };
    a.users
        .iter()
        .enumerate()
        .map(|(slot, &user)| {
            math::log2(1.0 + a.d[slot] * caps.l_dl(user, MBS) / rate_unit_bps)
                + math::log2(1.0 + a.v[slot] * caps.l_ul(user, MBS) / rate_unit_bps)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameVariant {
    /// Unlicensed capacities are zero when false (licensed-only LTE).
    pub unlicensed: bool,
    /// Users are served in both directions by the same BS.
    pub coupled: bool,
}

impl GameVariant {
    pub const LTEU_DECOUPLED: Self = Self { unlicensed: true, coupled: false };
    pub const LTE_DECOUPLED: Self = Self { unlicensed: false, coupled: false };
    pub const LTEU_COUPLED: Self = Self { unlicensed: true, coupled: true };
}

/// The cellular allocation game over one topology and channel realization.
#[derive(Debug, Clone)]
pub struct CellularGame {
    capacity: CapacityModel,
    spaces: Vec<ActionSpace>,
    features: Vec<Vec<Vec<f64>>>,
    eta: f64,
    rate_unit_bps: f64,
    coupled: bool,
}

/// A joint action evaluated on its conflict-resolved form.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub winners: Winners,
    /// Capacities under the uplink activity of the resolved profile.
    pub caps: LinkCapacitySet,
    pub utilities: Vec<f64>,
}

impl CellularGame {
    pub fn new(
        config: &ScenarioConfig,
        topology: &Topology,
        channel: ChannelRealization,
        lte_fraction: f64,
        variant: GameVariant,
        seed: u64,
    ) -> Self {
        let spaces = (0..topology.n_bs())
            .map(|bs| {
                let s = crate::rng::derive_seed(seed, crate::rng::tag::ACTIONS, bs as u64);
                ActionSpace::build(
                    bs,
                    topology.covered_users(bs),
                    config.z_levels,
                    config.action_set_size,
                    s,
                    variant.coupled,
                )
            })
            .collect();
        let capacity = CapacityModel::new(channel, config, lte_fraction, variant.unlicensed);
        Self::from_parts(capacity, spaces, config.eta, config.utility_rate_unit_bps, variant.coupled)
    }

    pub fn from_parts(capacity: CapacityModel, spaces: Vec<ActionSpace>, eta: f64, rate_unit_bps: f64, coupled: bool) -> Self {
        let features = spaces.iter().map(|s| s.actions.iter().map(AllocationAction::feature_vector).collect()).collect();
        Self { capacity, spaces, features, eta, rate_unit_bps, coupled }
    }

    pub fn spaces(&self) -> &[ActionSpace] {
        &self.spaces
    }

    pub fn capacity(&self) -> &CapacityModel {
        &self.capacity
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rate_unit_bps(&self) -> f64 {
        self.rate_unit_bps
    }

    pub fn is_coupled(&self) -> bool {
        self.coupled
    }

    pub fn action(&self, player: usize, index: usize) -> &AllocationAction {
        &self.spaces[player].actions[index]
    }

    pub fn raw_actions(&self, joint: &[usize]) -> Vec<AllocationAction> {
        joint.iter().enumerate().map(|(n, &a)| self.action(n, a).clone()).collect()
    }

    fn raw_refs(&self, joint: &[usize]) -> Vec<&AllocationAction> {
        joint.iter().enumerate().map(|(n, &a)| self.action(n, a)).collect()
    }

    /// Resolves conflicts and evaluates every player's utility.
    pub fn evaluate(&self, joint: &[usize]) -> Evaluation {
        let raw = self.raw_refs(joint);
        let pre_caps = self.capacity.capacities_for(raw.iter().copied());
        let winners = conflict_winners(&raw, &pre_caps, self.coupled);
        let (active_l, active_u) = self.active_after(&raw, &winners);
        let caps = self.capacity.capacities(&active_l, &active_u);
        let utilities = (0..raw.len()).map(|n| self.player_utility(raw[n], &winners, &caps)).collect();
        Evaluation { winners, caps, utilities }
    }

    fn active_after(&self, raw: &[&AllocationAction], w: &Winners) -> (Vec<bool>, Vec<bool>) {
        let n = self.capacity.n_users();
        let mut l = vec![false; n];
        let mut u = vec![false; n];
        for a in raw {
            for (slot, &user) in a.users.iter().enumerate() {
                if w.ul[user] == Some(a.owner) {
                    l[user] |= a.v[slot] > 0.0;
                    u[user] |= a.tau_at(slot) > 0.0;
                }
            }
        }
        (l, u)
    }

    fn player_utility(&self, a: &AllocationAction, w: &Winners, caps: &LinkCapacitySet) -> f64 {
        let n = a.owner;
        let unit = self.rate_unit_bps;
        let mut total = 0.0;
        for (slot, &user) in a.users.iter().enumerate() {
            if w.dl[user] == Some(n) {
                let dl = a.d[slot] * caps.l_dl(user, n) + self.eta * a.kappa_at(slot) * caps.u_dl(user, n);
                total += math::log2(1.0 + dl / unit);
            }
            if w.ul[user] == Some(n) {
                let ul = a.v[slot] * caps.l_ul(user, n) + a.tau_at(slot) * caps.u_ul(user, n);
                total += math::log2(1.0 + ul / unit);
            }
        }
        total
    }

    /// The conflict-free allocation actually executed for `joint`, and the
    /// capacities it runs under.
    pub fn resolved(&self, joint: &[usize]) -> (Vec<AllocationAction>, LinkCapacitySet) {
        let e = self.evaluate(joint);
        let raw = self.raw_refs(joint);
        (apply_winners(raw.into_iter(), &e.winners), e.caps)
    }

    pub fn user_rates(&self, joint: &[usize]) -> Result<UserRates, RateError> {
        let (resolved, caps) = self.resolved(joint);
        rate_model::compute_user_rates(&resolved, &caps)
    }

    /// Dense payoff tensors, for export or brute-force analysis.
    pub fn to_matrix_game(&self, cap: u128) -> Result<MatrixGame, GameError> {
        let sizes: Vec<usize> = self.spaces.iter().map(ActionSpace::len).collect();
        let total = sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128));
        if total > cap {
            return Err(GameError::InstanceTooLarge { size: total, cap });
        }
        let n = sizes.len();
        let mut payoffs = vec![Vec::with_capacity(total as usize); n];
        for_each_profile(&sizes, |joint| {
            for (p, u) in payoffs.iter_mut().zip(self.evaluate(joint).utilities) {
                p.push(u);
            }
        });
        MatrixGame::new(sizes, payoffs)
    }
}

impl GameModel for CellularGame {
    fn n_players(&self) -> usize {
        self.spaces.len()
    }

    fn n_actions(&self, player: usize) -> usize {
        self.spaces[player].len()
    }

    fn utility(&self, player: usize, joint: &[usize]) -> f64 {
        self.evaluate(joint).utilities[player]
    }

    fn utilities(&self, joint: &[usize]) -> Vec<f64> {
        self.evaluate(joint).utilities
    }

    fn action_features(&self, player: usize, action: usize) -> &[f64] {
        &self.features[player][action]
    }

    fn association_features(&self, player: usize, joint: &[usize]) -> Vec<f64> {
        let e = self.evaluate(joint);
        let users = &self.spaces[player].users;
        let mut out = Vec::with_capacity(2 * users.len());
        out.extend(users.iter().map(|&u| if e.winners.dl[u] == Some(player) { 1.0 } else { 0.0 }));
        out.extend(users.iter().map(|&u| if e.winners.ul[u] == Some(player) { 1.0 } else { 0.0 }));
        out
    }

    fn association_width(&self, player: usize) -> usize {
        2 * self.spaces[player].users.len()
    }

    fn association_key(&self, joint: &[usize]) -> Vec<usize> {
        let e = self.evaluate(joint);
        e.winners.dl.iter().chain(&e.winners.ul).map(|w| w.unwrap_or(usize::MAX)).collect()
    }
}

/// Expected utility estimate with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
    pub samples: usize,
}

fn opponent_space_size(sizes: &[usize]) -> u128 {
    sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
}

/// Enumerates the opponents' joint supports of `profile` (own slot fixed at
/// `own`), calling `f(joint, probability)`.
fn for_each_opponent_profile(
    player: usize,
    own: usize,
    profile: &[MixedStrategy],
    mut f: impl FnMut(&[usize], f64),
) {
    let supports: Vec<Vec<usize>> = profile
        .iter()
        .enumerate()
        .map(|(m, s)| if m == player { vec![own] } else { s.support() })
        .collect();
    let sizes: Vec<usize> = supports.iter().map(Vec::len).collect();
    let mut joint = vec![0usize; profile.len()];
    for_each_profile(&sizes, |idx| {
        let mut p = 1.0;
        for (m, &i) in idx.iter().enumerate() {
            joint[m] = supports[m][i];
            if m != player {
                p *= profile[m].probs[joint[m]];
            }
        }
        f(&joint, p);
    });
}

fn check_profile<G: GameModel + ?Sized>(game: &G, profile: &[MixedStrategy]) -> Result<(), GameError> {
    if profile.len() != game.n_players() {
        return Err(GameError::PlayerCountMismatch { expected: game.n_players(), got: profile.len() });
    }
    for (player, s) in profile.iter().enumerate() {
        if s.len() != game.n_actions(player) {
            return Err(GameError::ActionCountMismatch { player, expected: game.n_actions(player), got: s.len() });
        }
    }
    Ok(())
}

/// Expected utility of `player` playing `action` against the opponents'
/// mixed strategies (the entry at `player` in `profile` is ignored).
///
/// Exact when the opponents' joint support has at most `budget` profiles,
/// otherwise a Monte-Carlo average over `budget` draws.
pub fn expected_utility<G: GameModel + ?Sized>(
    game: &G,
    player: usize,
    action: usize,
    profile: &[MixedStrategy],
    budget: usize,
    rng: &mut SimRng,
) -> Result<Expectation, GameError> {
    check_profile(game, profile)?;
    expected_value(player, action, profile, budget, rng, |joint| game.utility(player, joint))
}

/// Expectation of `value(joint)` over the opponents of `player`; shared by
/// the game-level expected utility and the agents' reservoir-based estimate.
pub fn expected_value(
    player: usize,
    action: usize,
    profile: &[MixedStrategy],
    budget: usize,
    rng: &mut SimRng,
    mut value: impl FnMut(&[usize]) -> f64,
) -> Result<Expectation, GameError> {
    let sizes: Vec<usize> = profile
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != player)
        .map(|(_, s)| s.support().len())
        .collect();
    if opponent_space_size(&sizes) <= budget as u128 {
        let mut total = 0.0;
        let mut count = 0;
        for_each_opponent_profile(player, action, profile, |joint, p| {
            total += p * value(joint);
            count += 1;
        });
        return Ok(Expectation { value: total, std_error: 0.0, exact: true, samples: count });
    }
    let mut joint = vec![0usize; profile.len()];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..budget {
        for (m, s) in profile.iter().enumerate() {
            joint[m] = if m == player { action } else { s.sample(rng) };
        }
        let x = value(&joint);
        sum += x;
        sum_sq += x * x;
    }
    let n = budget as f64;
    let mean = sum / n;
    let var = if budget > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(Expectation { value: mean, std_error: math::sqrt(var / n), exact: false, samples: budget })
}

/// Per-action expected utilities of `player` against `profile`, by full
/// enumeration.
pub fn action_values<G: GameModel + ?Sized>(
    game: &G,
    player: usize,
    profile: &[MixedStrategy],
    cap: u128,
) -> Result<Vec<f64>, GameError> {
    check_profile(game, profile)?;
    let sizes: Vec<usize> = profile
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != player)
        .map(|(_, s)| s.support().len())
        .collect();
    let size = opponent_space_size(&sizes).saturating_mul(game.n_actions(player) as u128);
    if size > cap {
        return Err(GameError::InstanceTooLarge { size, cap });
    }
    Ok((0..game.n_actions(player))
        .map(|a| {
            let mut total = 0.0;
            for_each_opponent_profile(player, a, profile, |joint, p| total += p * game.utility(player, joint));
            total
        })
        .collect())
}

/// Expected utility of `player` when everyone plays `profile`.
pub fn mixed_utility<G: GameModel + ?Sized>(
    game: &G,
    player: usize,
    profile: &[MixedStrategy],
    cap: u128,
) -> Result<f64, GameError> {
    let values = action_values(game, player, profile, cap)?;
    Ok(values.iter().zip(profile[player].probs()).map(|(v, p)| v * p).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub player: usize,
    pub action: usize,
    pub gain: f64,
}

/// Outcome of an equilibrium check: the most profitable deviation found and
/// whether it stays within tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeReport {
    pub passed: bool,
    pub best_deviation: Option<Deviation>,
    /// Expected utility of each player under the checked profile.
    pub values: Vec<f64>,
}

/// Checks the mixed-equilibrium condition for `profile`. Utilities are
/// linear in a player's own mixture, so checking every pure deviation covers
/// every mixed one.
pub fn verify_mixed_ne<G: GameModel + ?Sized>(
    game: &G,
    profile: &[MixedStrategy],
    tolerance: f64,
    cap: u128,
) -> Result<NeReport, GameError> {
    check_profile(game, profile)?;
    let mut best: Option<Deviation> = None;
    let mut values = Vec::with_capacity(profile.len());
    for player in 0..game.n_players() {
        let av = action_values(game, player, profile, cap)?;
        let current: f64 = av.iter().zip(profile[player].probs()).map(|(v, p)| v * p).sum();
        values.push(current);
        for (action, &v) in av.iter().enumerate() {
            let gain = v - current;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(Deviation { player, action, gain });
            }
        }
    }
    let passed = best.is_none_or(|b| b.gain <= tolerance);
    Ok(NeReport { passed, best_deviation: best, values })
}

/// Equilibrium check among epsilon-greedy strategies: every player mixes
/// with weight `1 - eps + eps/|A|` on `peaks[n]`, and a deviation moves that
/// peak. The gain of moving the peak to `a` is
/// `(1 - eps) * (E[u(a)] - E[u(peak)])`.
pub fn verify_epsilon_greedy_ne<G: GameModel + ?Sized>(
    game: &G,
    peaks: &[usize],
    epsilon: f64,
    tolerance: f64,
    cap: u128,
) -> Result<NeReport, GameError> {
    let profile: Vec<MixedStrategy> = peaks
        .iter()
        .enumerate()
        .map(|(n, &p)| MixedStrategy::epsilon_greedy(game.n_actions(n), p, epsilon))
        .collect();
    check_profile(game, &profile)?;
    let mut best: Option<Deviation> = None;
    let mut values = Vec::with_capacity(profile.len());
    for (player, &peak) in peaks.iter().enumerate() {
        let av = action_values(game, player, &profile, cap)?;
        values.push(av.iter().zip(profile[player].probs()).map(|(v, p)| v * p).sum());
        for (action, &v) in av.iter().enumerate() {
            let gain = (1.0 - epsilon) * (v - av[peak]);
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(Deviation { player, action, gain });
            }
        }
    }
    let passed = best.is_none_or(|b| b.gain <= tolerance);
    Ok(NeReport { passed, best_deviation: best, values })
}

/// All pure-strategy equilibria, by brute force.
pub fn pure_nash_equilibria<G: GameModel + ?Sized>(game: &G, tolerance: f64, cap: u128) -> Result<Vec<Vec<usize>>, GameError> {
    let sizes: Vec<usize> = (0..game.n_players()).map(|n| game.n_actions(n)).collect();
    let total = opponent_space_size(&sizes);
    if total > cap {
        return Err(GameError::InstanceTooLarge { size: total, cap });
    }
    let mut out = Vec::new();
    for_each_profile(&sizes, |joint| {
        let stable = (0..sizes.len()).all(|n| {
            let current = game.utility(n, joint);
            let mut alt = joint.to_vec();
            (0..sizes[n]).all(|a| {
                alt[n] = a;
                game.utility(n, &alt) <= current + tolerance
            })
        });
        if stable {
            out.push(joint.to_vec());
        }
    });
    Ok(out)
}
