//! Link capacities on the licensed (FDD) and unlicensed (duty-cycled TDD)
//! bands and the per-user rates a joint allocation produces.
//!
//! Downlink SINRs depend only on the fixed transmit powers, so they are
//! computed once per channel realization. Uplink interference comes from
//! the users actually transmitting in the band, so uplink capacities are
//! rebuilt for each set of active uplink users.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::AllocationAction;
use crate::math;
use crate::scenario::{Band, ChannelRealization, ScenarioConfig, MBS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("the macro cell has no unlicensed capacity")]
    UnlicensedAtMbs,
    #[error("user {user} is served by both BS {first} and BS {second} in the {direction}")]
    MultipleServing {
        user: usize,
        direction: Direction,
        first: usize,
        second: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Downlink,
    Uplink,
}

impl core::fmt::Display for Direction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Direction::Downlink => "downlink",
            Direction::Uplink => "uplink",
        })
    }
}

/// Transmit powers, noise and bandwidths in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub p_mbs_w: f64,
    pub p_sbs_w: f64,
    pub p_user_w: f64,
    pub noise_w: f64,
    pub f_l_dl_hz: f64,
    pub f_l_ul_hz: f64,
    pub f_u_hz: f64,
}

impl RadioParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            p_mbs_w: math::dbm_to_watts(config.p_mbs_dbm),
            p_sbs_w: math::dbm_to_watts(config.p_sbs_dbm),
            p_user_w: math::dbm_to_watts(config.p_user_dbm),
            noise_w: math::dbm_to_watts(config.noise_power_dbm),
            f_l_dl_hz: config.f_l_dl_hz,
            f_l_ul_hz: config.f_l_ul_hz,
            f_u_hz: config.f_u_hz,
        }
    }

    fn bs_power(&self, bs: usize) -> f64 {
        if bs == MBS {
            self.p_mbs_w
        } else {
            self.p_sbs_w
        }
    }
}

fn shannon(bandwidth: f64, signal: f64, interference: f64, noise: f64) -> f64 {
    bandwidth * math::log2(1.0 + signal / (interference + noise))
}

/// Licensed downlink capacity from `bs` to `user`; every other BS interferes.
pub fn licensed_dl_capacity(user: usize, bs: usize, channel: &ChannelRealization, config: &ScenarioConfig) -> f64 {
    licensed_dl(user, bs, channel, &RadioParams::from_config(config))
}

fn licensed_dl(user: usize, bs: usize, channel: &ChannelRealization, radio: &RadioParams) -> f64 {
    let signal = radio.bs_power(bs) * channel.gain(user, bs, Band::Licensed);
    let interference: f64 = (0..channel.n_bs())
        .filter(|&k| k != bs)
        .map(|k| radio.bs_power(k) * channel.gain(user, k, Band::Licensed))
        .sum();
    shannon(radio.f_l_dl_hz, signal, interference, radio.noise_w)
}

/// Licensed uplink capacity from `user` to `bs`; every other active user
/// interferes at `bs`.
pub fn licensed_ul_capacity(
    user: usize,
    bs: usize,
    channel: &ChannelRealization,
    config: &ScenarioConfig,
    active_users: &[bool],
) -> f64 {
    let radio = RadioParams::from_config(config);
    uplink(user, bs, channel, &radio, active_users, Band::Licensed, radio.f_l_ul_hz)
}

fn uplink(
    user: usize,
    bs: usize,
    channel: &ChannelRealization,
    radio: &RadioParams,
    active_users: &[bool],
    band: Band,
    bandwidth: f64,
) -> f64 {
    let signal = radio.p_user_w * channel.gain(user, bs, band);
    let interference: f64 = (0..channel.n_users())
        .filter(|&k| k != user && active_users[k])
        .map(|k| radio.p_user_w * channel.gain(k, bs, band))
        .sum();
    shannon(bandwidth, signal, interference, radio.noise_w)
}

/// Unlicensed (downlink, uplink) capacities between `user` and small cell
/// `sbs`, scaled by the LTE-U airtime share `lte_fraction`. Downlink
/// interference comes from the other small cells, uplink interference from
/// the other active unlicensed uplink users.
pub fn unlicensed_capacities(
    user: usize,
    sbs: usize,
    channel: &ChannelRealization,
    config: &ScenarioConfig,
    lte_fraction: f64,
    active_ul_users: &[bool],
) -> Result<(f64, f64), RateError> {
    unlicensed(user, sbs, channel, &RadioParams::from_config(config), lte_fraction, active_ul_users)
}

fn unlicensed(
    user: usize,
    sbs: usize,
    channel: &ChannelRealization,
    radio: &RadioParams,
    lte_fraction: f64,
    active_ul_users: &[bool],
) -> Result<(f64, f64), RateError> {
    if sbs == MBS {
        return Err(RateError::UnlicensedAtMbs);
    }
    let bw = lte_fraction * radio.f_u_hz;
    let signal = radio.p_sbs_w * channel.gain(user, sbs, Band::Unlicensed);
    let interference: f64 = (1..channel.n_bs())
        .filter(|&k| k != sbs)
        .map(|k| radio.p_sbs_w * channel.gain(user, k, Band::Unlicensed))
        .sum();
    let dl = shannon(bw, signal, interference, radio.noise_w);
    let ul = uplink(user, sbs, channel, radio, active_ul_users, Band::Unlicensed, bw);
    Ok((dl, ul))
}

/// Capacities in bit/s for every (user, BS) pair, row-major by user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCapacitySet {
    pub n_users: usize,
    pub n_bs: usize,
    pub c_l_dl: Vec<f64>,
    pub c_l_ul: Vec<f64>,
    pub c_u_dl: Vec<f64>,
    pub c_u_ul: Vec<f64>,
    pub lte_fraction: f64,
}

impl LinkCapacitySet {
    #[inline]
    fn idx(&self, user: usize, bs: usize) -> usize {
        user * self.n_bs + bs
    }
    #[inline]
    pub fn l_dl(&self, user: usize, bs: usize) -> f64 {
        self.c_l_dl[self.idx(user, bs)]
    }
    #[inline]
    pub fn l_ul(&self, user: usize, bs: usize) -> f64 {
        self.c_l_ul[self.idx(user, bs)]
    }
    #[inline]
    pub fn u_dl(&self, user: usize, bs: usize) -> f64 {
        self.c_u_dl[self.idx(user, bs)]
    }
    #[inline]
    pub fn u_ul(&self, user: usize, bs: usize) -> f64 {
        self.c_u_ul[self.idx(user, bs)]
    }

    /// Fraction-weighted downlink offer of `action` to its `slot`-th user.
    pub fn dl_offer(&self, action: &AllocationAction, slot: usize) -> f64 {
        let user = action.users[slot];
        action.d[slot] * self.l_dl(user, action.owner) + action.kappa_at(slot) * self.u_dl(user, action.owner)
    }

    pub fn ul_offer(&self, action: &AllocationAction, slot: usize) -> f64 {
        let user = action.users[slot];
        action.v[slot] * self.l_ul(user, action.owner) + action.tau_at(slot) * self.u_ul(user, action.owner)
    }
}

/// Caches downlink capacities of one channel realization and produces full
/// capacity sets for given uplink activity.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityModel {
    channel: ChannelRealization,
    radio: RadioParams,
    lte_fraction: f64,
    unlicensed_enabled: bool,
    c_l_dl: Vec<f64>,
    c_u_dl: Vec<f64>,
}

impl CapacityModel {
    /// With `unlicensed_enabled == false` every unlicensed capacity is zero
    /// (licensed-only LTE).
    pub fn new(channel: ChannelRealization, config: &ScenarioConfig, lte_fraction: f64, unlicensed_enabled: bool) -> Self {
        let radio = RadioParams::from_config(config);
        let (n_users, n_bs) = (channel.n_users(), channel.n_bs());
        let mut c_l_dl = vec![0.0; n_users * n_bs];
        let mut c_u_dl = vec![0.0; n_users * n_bs];
        let no_uplink = vec![false; n_users];
        for u in 0..n_users {
            for bs in 0..n_bs {
                c_l_dl[u * n_bs + bs] = licensed_dl(u, bs, &channel, &radio);
                if unlicensed_enabled && bs != MBS {
                    let (dl, _) = unlicensed(u, bs, &channel, &radio, lte_fraction, &no_uplink)
                        .expect("small cell index");
                    c_u_dl[u * n_bs + bs] = dl;
                }
            }
        }
        Self { channel, radio, lte_fraction, unlicensed_enabled, c_l_dl, c_u_dl }
    }

    pub fn channel(&self) -> &ChannelRealization {
        &self.channel
    }

    pub fn lte_fraction(&self) -> f64 {
        self.lte_fraction
    }

    pub fn unlicensed_enabled(&self) -> bool {
        self.unlicensed_enabled
    }

    pub fn n_users(&self) -> usize {
        self.channel.n_users()
    }

    pub fn n_bs(&self) -> usize {
        self.channel.n_bs()
    }

    /// Full capacity set given which users transmit on the licensed and the
    /// unlicensed uplink.
    pub fn capacities(&self, active_licensed_ul: &[bool], active_unlicensed_ul: &[bool]) -> LinkCapacitySet {
        let (n_users, n_bs) = (self.n_users(), self.n_bs());
        let p_u = self.radio.p_user_w;
        let noise = self.radio.noise_w;
        // Total received uplink power at each BS; subtracting a user's own
        // contribution gives its interference.
        let mut total_l = vec![0.0; n_bs];
        let mut total_u = vec![0.0; n_bs];
        for k in 0..n_users {
            for bs in 0..n_bs {
                if active_licensed_ul[k] {
                    total_l[bs] += p_u * self.channel.gain(k, bs, Band::Licensed);
                }
                if active_unlicensed_ul[k] {
                    total_u[bs] += p_u * self.channel.gain(k, bs, Band::Unlicensed);
                }
            }
        }
        let mut c_l_ul = vec![0.0; n_users * n_bs];
        let mut c_u_ul = vec![0.0; n_users * n_bs];
        let bw_u = self.lte_fraction * self.radio.f_u_hz;
        for u in 0..n_users {
            for bs in 0..n_bs {
                let own_l = p_u * self.channel.gain(u, bs, Band::Licensed);
                let interf_l = if active_licensed_ul[u] { total_l[bs] - own_l } else { total_l[bs] };
                c_l_ul[u * n_bs + bs] = shannon(self.radio.f_l_ul_hz, own_l, interf_l.max(0.0), noise);
                if self.unlicensed_enabled && bs != MBS {
                    let own_u = p_u * self.channel.gain(u, bs, Band::Unlicensed);
                    let interf_u = if active_unlicensed_ul[u] { total_u[bs] - own_u } else { total_u[bs] };
                    c_u_ul[u * n_bs + bs] = shannon(bw_u, own_u, interf_u.max(0.0), noise);
                }
            }
        }
        LinkCapacitySet {
            n_users,
            n_bs,
            c_l_dl: self.c_l_dl.clone(),
            c_l_ul,
            c_u_dl: self.c_u_dl.clone(),
            c_u_ul,
            lte_fraction: self.lte_fraction,
        }
    }

    /// Capacities for the uplink activity implied by `joint`.
    pub fn capacities_for<'a>(&self, joint: impl IntoIterator<Item = &'a AllocationAction>) -> LinkCapacitySet {
        let (active_l, active_u) = active_uplink_users(self.n_users(), joint);
        self.capacities(&active_l, &active_u)
    }
}

/// Users with a nonzero licensed / unlicensed uplink grant anywhere in `joint`.
pub fn active_uplink_users<'a>(
    n_users: usize,
    joint: impl IntoIterator<Item = &'a AllocationAction>,
) -> (Vec<bool>, Vec<bool>) {
    let mut licensed = vec![false; n_users];
    let mut unlicensed = vec![false; n_users];
    for action in joint {
        for (slot, &user) in action.users.iter().enumerate() {
            if action.v[slot] > 0.0 {
                licensed[user] = true;
            }
            if action.tau_at(slot) > 0.0 {
                unlicensed[user] = true;
            }
        }
    }
    (licensed, unlicensed)
}

/// Long-term per-user rates and the BS serving each direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRates {
    pub r_dl: Vec<f64>,
    pub r_ul: Vec<f64>,
    pub serving_dl: Vec<Option<usize>>,
    pub serving_ul: Vec<Option<usize>>,
}

impl UserRates {
    pub fn n_users(&self) -> usize {
        self.r_dl.len()
    }

    /// Downlink plus uplink rate of each user.
    pub fn totals(&self) -> Vec<f64> {
        self.r_dl.iter().zip(&self.r_ul).map(|(d, u)| d + u).collect()
    }

    pub fn sum_rate(&self) -> f64 {
        self.r_dl.iter().sum::<f64>() + self.r_ul.iter().sum::<f64>()
    }

    /// Users whose downlink and uplink are served by different BSs.
    pub fn decoupled_users(&self) -> usize {
        self.serving_dl
            .iter()
            .zip(&self.serving_ul)
            .filter(|(d, u)| matches!((d, u), (Some(a), Some(b)) if a != b))
            .count()
    }
}

/// Aggregates fraction-weighted capacities per user. Each user may be served
/// by at most one BS per direction.
pub fn compute_user_rates(joint: &[AllocationAction], caps: &LinkCapacitySet) -> Result<UserRates, RateError> {
    let n = caps.n_users;
    let mut rates = UserRates {
        r_dl: vec![0.0; n],
        r_ul: vec![0.0; n],
        serving_dl: vec![None; n],
        serving_ul: vec![None; n],
    };
    for action in joint {
        for (slot, &user) in action.users.iter().enumerate() {
            if action.d[slot] > 0.0 || action.kappa_at(slot) > 0.0 {
                if let Some(first) = rates.serving_dl[user] {
                    return Err(RateError::MultipleServing {
                        user,
                        direction: Direction::Downlink,
                        first,
                        second: action.owner,
                    });
                }
                rates.serving_dl[user] = Some(action.owner);
                rates.r_dl[user] += caps.dl_offer(action, slot);
            }
            if action.v[slot] > 0.0 || action.tau_at(slot) > 0.0 {
                if let Some(first) = rates.serving_ul[user] {
                    return Err(RateError::MultipleServing {
                        user,
                        direction: Direction::Uplink,
                        first,
                        second: action.owner,
                    });
                }
                rates.serving_ul[user] = Some(action.owner);
                rates.r_ul[user] += caps.ul_offer(action, slot);
            }
        }
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{draw_channel, generate_topology};
    use alloc::vec;

    /// Channel whose gains are given directly (same in both bands).
    fn channel(n_users: usize, n_bs: usize, gains: &[f64]) -> ChannelRealization {
        ChannelRealization::from_gains(n_users, n_bs, gains.to_vec(), gains.to_vec())
    }

    fn config() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn single_bs_unit_snr_gives_bandwidth() {
        let c = config();
        let r = RadioParams::from_config(&c);
        let h = r.noise_w / r.p_mbs_w;
        let ch = channel(1, 1, &[h]);
        let cap = licensed_dl_capacity(0, MBS, &ch, &c);
        assert!((cap - 10e6).abs() < 1e-6, "{cap}");
    }

    #[test]
    fn zero_gain_gives_zero_capacity() {
        let c = config();
        let ch = channel(2, 2, &[0.0, 1e-9, 1e-9, 1e-9]);
        assert_eq!(licensed_dl_capacity(0, MBS, &ch, &c), 0.0);
        assert_eq!(licensed_ul_capacity(0, MBS, &ch, &c, &[true, true]), 0.0);
    }

    #[test]
    fn two_bs_equal_received_power_gives_unit_sinr() {
        let mut c = config();
        c.noise_power_dbm = -300.0;
        let r = RadioParams::from_config(&c);
        // P_M h_0 = P_P h_1
        let h1 = 1e-9;
        let h0 = r.p_sbs_w * h1 / r.p_mbs_w;
        let ch = channel(1, 2, &[h0, h1]);
        for bs in 0..2 {
            let cap = licensed_dl_capacity(0, bs, &ch, &c);
            assert!((cap - 10e6).abs() < 1e-3, "{cap}");
        }
    }

    #[test]
    fn lone_uplink_user_snr_three() {
        let c = config();
        let r = RadioParams::from_config(&c);
        let h = 3.0 * r.noise_w / r.p_user_w;
        let ch = channel(1, 1, &[h]);
        let cap = licensed_ul_capacity(0, MBS, &ch, &c, &[true]);
        assert!((cap - 20e6).abs() < 1e-6, "{cap}");
    }

    #[test]
    fn symmetric_uplink_users_get_unit_sinr() {
        let mut c = config();
        c.noise_power_dbm = -300.0;
        let ch = channel(2, 1, &[1e-9, 1e-9]);
        for u in 0..2 {
            let cap = licensed_ul_capacity(u, MBS, &ch, &c, &[true, true]);
            assert!((cap - 10e6).abs() < 1e-3);
        }
    }

    #[test]
    fn unlicensed_capacity_edge_cases() {
        let c = config();
        let r = RadioParams::from_config(&c);
        let h = r.noise_w / r.p_sbs_w;
        let ch = channel(1, 2, &[1e-30, h]);
        assert_eq!(unlicensed_capacities(0, 1, &ch, &c, 0.0, &[true]).unwrap(), (0.0, 0.0));
        let (dl, _) = unlicensed_capacities(0, 1, &ch, &c, 1.0, &[true]).unwrap();
        assert!((dl - 20e6).abs() < 1e-6);
        let (dl_half, ul_half) = unlicensed_capacities(0, 1, &ch, &c, 0.5, &[true]).unwrap();
        let (_, ul) = unlicensed_capacities(0, 1, &ch, &c, 1.0, &[true]).unwrap();
        assert_eq!(dl_half, dl / 2.0);
        assert_eq!(ul_half, ul / 2.0);
        assert_eq!(unlicensed_capacities(0, MBS, &ch, &c, 1.0, &[true]), Err(RateError::UnlicensedAtMbs));
    }

    #[test]
    fn model_matches_direct_formulas() {
        let c = config();
        let t = generate_topology(&c, 3);
        let ch = draw_channel(&t, &c, 4);
        let model = CapacityModel::new(ch.clone(), &c, 0.6, true);
        let active_l: Vec<bool> = (0..c.n_users).map(|u| u % 2 == 0).collect();
        let active_u: Vec<bool> = (0..c.n_users).map(|u| u % 3 == 0).collect();
        let caps = model.capacities(&active_l, &active_u);
        for u in 0..c.n_users {
            for bs in 0..c.n_bs() {
                let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
                assert!(rel(caps.l_dl(u, bs), licensed_dl_capacity(u, bs, &ch, &c)));
                assert!(rel(caps.l_ul(u, bs), licensed_ul_capacity(u, bs, &ch, &c, &active_l)));
                if bs == MBS {
                    assert_eq!(caps.u_dl(u, bs), 0.0);
                    assert_eq!(caps.u_ul(u, bs), 0.0);
                } else {
                    let (dl, ul) = unlicensed_capacities(u, bs, &ch, &c, 0.6, &active_u).unwrap();
                    assert!(rel(caps.u_dl(u, bs), dl));
                    assert!(rel(caps.u_ul(u, bs), ul));
                }
            }
        }
    }

    #[test]
    fn licensed_only_model_zeroes_unlicensed() {
        let c = config();
        let t = generate_topology(&c, 3);
        let model = CapacityModel::new(draw_channel(&t, &c, 4), &c, 0.6, false);
        let caps = model.capacities(&vec![true; c.n_users], &vec![true; c.n_users]);
        assert!(caps.c_u_dl.iter().chain(&caps.c_u_ul).all(|&x| x == 0.0));
    }

    fn caps_2x3() -> LinkCapacitySet {
        // users 0, 1; BSs 0 (MBS), 1, 2
        LinkCapacitySet {
            n_users: 2,
            n_bs: 3,
            c_l_dl: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            c_l_ul: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            c_u_dl: vec![0.0, 7.0, 8.0, 0.0, 9.0, 11.0],
            c_u_ul: vec![0.0, 70.0, 80.0, 0.0, 90.0, 110.0],
            lte_fraction: 1.0,
        }
    }

    #[test]
    fn zero_allocations_give_zero_rates() {
        let caps = caps_2x3();
        let joint = vec![
            AllocationAction::zeros(0, vec![0, 1], true),
            AllocationAction::zeros(1, vec![0, 1], false),
        ];
        let r = compute_user_rates(&joint, &caps).unwrap();
        assert_eq!(r.r_dl, vec![0.0, 0.0]);
        assert_eq!(r.r_ul, vec![0.0, 0.0]);
        assert_eq!(r.serving_dl, vec![None, None]);
    }

    #[test]
    fn full_band_to_one_user() {
        let caps = caps_2x3();
        let mut a = AllocationAction::zeros(1, vec![0, 1], false);
        a.d[1] = 1.0;
        let r = compute_user_rates(&[a], &caps).unwrap();
        assert_eq!(r.r_dl, vec![0.0, caps.l_dl(1, 1)]);
        assert_eq!(r.serving_dl[1], Some(1));
    }

    #[test]
    fn decoupled_grant_from_two_small_cells() {
        let caps = caps_2x3();
        // DL licensed from SBS 1, UL unlicensed to SBS 2, both for user 0.
        let mut a1 = AllocationAction::zeros(1, vec![0], false);
        a1.d[0] = 0.5;
        let mut a2 = AllocationAction::zeros(2, vec![0], false);
        a2.tau[0] = 0.3;
        let r = compute_user_rates(&[a1, a2], &caps).unwrap();
        assert_eq!(r.r_dl[0], 0.5 * 2.0);
        assert!((r.r_ul[0] - 0.3 * 80.0).abs() < 1e-12);
        assert_eq!(r.serving_dl[0], Some(1));
        assert_eq!(r.serving_ul[0], Some(2));
        assert_eq!(r.decoupled_users(), 1);
    }

    #[test]
    fn double_service_is_rejected() {
        let caps = caps_2x3();
        let mut a1 = AllocationAction::zeros(1, vec![0], false);
        a1.v[0] = 0.1;
        let mut a2 = AllocationAction::zeros(0, vec![0], true);
        a2.v[0] = 0.2;
        let err = compute_user_rates(&[a1, a2], &caps).unwrap_err();
        assert!(matches!(err, RateError::MultipleServing { user: 0, direction: Direction::Uplink, .. }));
    }
}
