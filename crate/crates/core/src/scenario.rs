//! Scenario configuration, network topology and the fading channel.
//!
//! Base stations are indexed globally with the macro cell at index 0 and
//! small cells at `1..=n_sbs`. All randomness is drawn from streams derived
//! from an explicit seed, so every function here is a pure function of its
//! arguments.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rng::SimRng;

/// Global index of the macro base station.
pub const MBS: usize = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}` must be strictly positive, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("`{field}` is out of range: {reason}")]
    OutOfRange { field: &'static str, reason: &'static str },
}

/// Log-distance path loss `intercept + slope * log10(d / 1 m)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl PathLoss {
    pub const fn new(intercept_db: f64, slope_db: f64) -> Self {
        Self { intercept_db, slope_db }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Licensed,
    Unlicensed,
}

/// 802.11 constants for the RTS/CTS saturation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WifiConfig {
    pub slot_time_s: f64,
    pub sifs_s: f64,
    pub difs_s: f64,
    pub prop_delay_s: f64,
    pub rts_bits: f64,
    pub cts_bits: f64,
    pub ack_bits: f64,
    pub header_bits: f64,
    pub payload_bits: f64,
    /// Payload information per successful transmission; taken equal to the
    /// packet payload.
    pub payload_info_bits: f64,
    pub channel_bps: f64,
    pub cw_min: u32,
    pub backoff_stages: u32,
}

impl Default for WifiConfig {
    fn default() -> Self {
        Self {
            slot_time_s: 9e-6,
            sifs_s: 16e-6,
            difs_s: 34e-6,
            prop_delay_s: 0.0,
            rts_bits: 352.0,
            cts_bits: 304.0,
            ack_bits: 304.0,
            header_bits: 416.0,
            payload_bits: 1500.0 * 8.0,
            payload_info_bits: 1500.0 * 8.0,
            channel_bps: 130e6,
            cw_min: 16,
            backoff_stages: 6,
        }
    }
}

/// Every physical, protocol and learning parameter of a simulation.
///
/// Defaults are the published system parameters scaled down to desk size
/// (few small cells, few users, sampled action sets, 100-unit reservoirs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub macro_radius_m: f64,
    pub n_sbs: usize,
    pub n_waps: usize,
    pub n_users: usize,
    pub wifi_users_per_wap: usize,
    pub p_mbs_dbm: f64,
    pub p_sbs_dbm: f64,
    pub p_user_dbm: f64,
    pub noise_power_dbm: f64,
    pub f_l_dl_hz: f64,
    pub f_l_ul_hz: f64,
    pub f_u_hz: f64,
    pub sbs_coverage_m: f64,
    pub min_link_distance_m: f64,
    pub z_levels: u32,
    pub eta: f64,
    pub wifi_rate_req_bps: f64,
    pub pathloss_licensed: PathLoss,
    pub pathloss_unlicensed: PathLoss,
    pub epsilon: f64,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    pub lambda_q: f64,
    /// Listed next to the learning rates in the parameter table without a
    /// stated role. Carried for completeness, never read.
    pub legacy_alpha: f64,
    pub reservoir_units: usize,
    pub reservoir_density: f64,
    pub spectral_radius: f64,
    pub input_scaling: f64,
    pub action_set_size: usize,
    /// Opponent-profile budget for expected rewards: exact enumeration up to
    /// this many profiles, Monte-Carlo with this many draws above.
    pub expectation_budget: usize,
    /// Rates enter the log utility in this unit (1e6 = Mbps).
    pub utility_rate_unit_bps: f64,
    pub max_iterations: usize,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    /// Every learner must have played each of its actions this many times
    /// before a run can be declared converged (0 disables the check).
    pub convergence_min_visits: usize,
    pub rng_seed: u64,
    pub wifi: WifiConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            macro_radius_m: 500.0,
            n_sbs: 4,
            n_waps: 2,
            n_users: 12,
            wifi_users_per_wap: 4,
            p_mbs_dbm: 43.0,
            p_sbs_dbm: 30.0,
            p_user_dbm: 20.0,
            noise_power_dbm: -104.0,
            f_l_dl_hz: 10e6,
            f_l_ul_hz: 10e6,
            f_u_hz: 20e6,
            sbs_coverage_m: 100.0,
            min_link_distance_m: 1.0,
            z_levels: 10,
            eta: 0.7,
            wifi_rate_req_bps: 4e6,
            pathloss_licensed: PathLoss::new(15.3, 37.5),
            pathloss_unlicensed: PathLoss::new(15.3, 50.0),
            epsilon: 0.7,
            lambda_alpha: 0.08,
            lambda_beta: 0.06,
            lambda_q: 0.06,
            legacy_alpha: 0.05,
            reservoir_units: 100,
            reservoir_density: 0.1,
            spectral_radius: 0.9,
            input_scaling: 0.1,
            action_set_size: 64,
            expectation_budget: 32,
            utility_rate_unit_bps: 1e6,
            max_iterations: 2000,
            convergence_window: 50,
            convergence_tol: 1e-3,
            convergence_min_visits: 1,
            rng_seed: 1,
            wifi: WifiConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn n_bs(&self) -> usize {
        self.n_sbs + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("macro_radius_m", self.macro_radius_m),
            ("f_l_dl_hz", self.f_l_dl_hz),
            ("f_l_ul_hz", self.f_l_ul_hz),
            ("f_u_hz", self.f_u_hz),
            ("sbs_coverage_m", self.sbs_coverage_m),
            ("min_link_distance_m", self.min_link_distance_m),
            ("utility_rate_unit_bps", self.utility_rate_unit_bps),
            ("reservoir_density", self.reservoir_density),
            ("spectral_radius", self.spectral_radius),
            ("input_scaling", self.input_scaling),
            ("wifi.channel_bps", self.wifi.channel_bps),
            ("wifi.slot_time_s", self.wifi.slot_time_s),
            ("wifi.rts_bits", self.wifi.rts_bits),
            ("wifi.cts_bits", self.wifi.cts_bits),
            ("wifi.ack_bits", self.wifi.ack_bits),
            ("wifi.header_bits", self.wifi.header_bits),
            ("wifi.payload_bits", self.wifi.payload_bits),
            ("wifi.payload_info_bits", self.wifi.payload_info_bits),
        ];
        for (field, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NotPositive { field, value });
            }
        }
        let counts = [
            ("n_users", self.n_users),
            ("n_waps", self.n_waps),
            ("wifi_users_per_wap", self.wifi_users_per_wap),
            ("reservoir_units", self.reservoir_units),
            ("action_set_size", self.action_set_size),
            ("expectation_budget", self.expectation_budget),
            ("convergence_window", self.convergence_window),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(ConfigError::NotPositive { field, value: 0.0 });
            }
        }
        for (field, value) in [
            ("p_mbs_dbm", self.p_mbs_dbm),
            ("p_sbs_dbm", self.p_sbs_dbm),
            ("p_user_dbm", self.p_user_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
        ] {
            if !value.is_finite() {
                return Err(ConfigError::OutOfRange { field, reason: "power must be finite" });
            }
        }
        if self.z_levels < 2 {
            return Err(ConfigError::OutOfRange { field: "z_levels", reason: "need at least 2 levels" });
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ConfigError::OutOfRange { field: "epsilon", reason: "must lie in (0, 1)" });
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ConfigError::OutOfRange { field: "eta", reason: "must lie in [0, 1]" });
        }
        if !(self.spectral_radius < 1.0) {
            return Err(ConfigError::OutOfRange { field: "spectral_radius", reason: "must be below 1" });
        }
        if self.reservoir_density > 1.0 {
            return Err(ConfigError::OutOfRange { field: "reservoir_density", reason: "must be at most 1" });
        }
        if !(self.wifi_rate_req_bps >= 0.0) {
            return Err(ConfigError::OutOfRange { field: "wifi_rate_req_bps", reason: "must be nonnegative" });
        }
        for (field, pl) in [
            ("pathloss_licensed", self.pathloss_licensed),
            ("pathloss_unlicensed", self.pathloss_unlicensed),
        ] {
            if !(pl.slope_db >= 0.0) || !pl.intercept_db.is_finite() {
                return Err(ConfigError::OutOfRange { field, reason: "loss must be nondecreasing in distance" });
            }
        }
        for (field, lambda) in [
            ("lambda_alpha", self.lambda_alpha),
            ("lambda_beta", self.lambda_beta),
            ("lambda_q", self.lambda_q),
        ] {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(ConfigError::OutOfRange { field, reason: "learning rate must be nonnegative" });
            }
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(ConfigError::OutOfRange { field: "convergence_tol", reason: "must be nonnegative" });
        }
        if self.wifi.cw_min < 2 {
            return Err(ConfigError::OutOfRange { field: "wifi.cw_min", reason: "need at least 2" });
        }
        if !(self.wifi.prop_delay_s >= 0.0 && self.wifi.sifs_s >= 0.0 && self.wifi.difs_s >= 0.0) {
            return Err(ConfigError::OutOfRange { field: "wifi", reason: "times must be nonnegative" });
        }
        Ok(())
    }

    pub fn bs_power_dbm(&self, bs: usize) -> f64 {
        if bs == MBS {
            self.p_mbs_dbm
        } else {
            self.p_sbs_dbm
        }
    }

    pub fn pathloss(&self, band: Band) -> PathLoss {
        match band {
            Band::Licensed => self.pathloss_licensed,
            Band::Unlicensed => self.pathloss_unlicensed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        math::sqrt((self.x - other.x) * (self.x - other.x) + (self.y - other.y) * (self.y - other.y))
    }

    pub fn norm(&self) -> f64 {
        self.distance(&Point::ORIGIN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub mbs_position: Point,
    pub sbs_positions: Vec<Point>,
    pub wap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// For each user, the ascending list of BSs covering it. Always starts
    /// with the MBS.
    pub coverage_map: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from explicit positions, deriving the coverage map.
    pub fn from_positions(
        sbs_positions: Vec<Point>,
        wap_positions: Vec<Point>,
        user_positions: Vec<Point>,
        sbs_coverage_m: f64,
    ) -> Self {
        let coverage_map = user_positions
            .iter()
            .map(|u| {
                let mut set = alloc::vec![MBS];
                set.extend(
                    sbs_positions
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.distance(u) <= sbs_coverage_m)
                        .map(|(j, _)| j + 1),
                );
                set
            })
            .collect();
        Self {
            mbs_position: Point::ORIGIN,
            sbs_positions,
            wap_positions,
            user_positions,
            coverage_map,
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_positions.len()
    }

    pub fn n_bs(&self) -> usize {
        self.sbs_positions.len() + 1
    }

    pub fn bs_position(&self, bs: usize) -> Point {
        if bs == MBS {
            self.mbs_position
        } else {
            self.sbs_positions[bs - 1]
        }
    }

    /// Users inside the coverage area of `bs`, ascending. The MBS covers all.
    pub fn covered_users(&self, bs: usize) -> Vec<usize> {
        self.coverage_map
            .iter()
            .enumerate()
            .filter(|(_, set)| set.contains(&bs))
            .map(|(u, _)| u)
            .collect()
    }
}

fn uniform_in_disc(rng: &mut SimRng, radius: f64) -> Point {
    let r = radius * math::sqrt(rng.gen::<f64>());
    let theta = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
    Point::new(r * math::cos(theta), r * math::sin(theta))
}

/// Draws SBS, WAP and user positions uniformly over the macro disc.
pub fn generate_topology(config: &ScenarioConfig, seed: u64) -> Topology {
    let mut rng = crate::rng::stream(seed, crate::rng::tag::TOPOLOGY, 0);
    let radius = config.macro_radius_m;
    let sbs: Vec<Point> = (0..config.n_sbs).map(|_| uniform_in_disc(&mut rng, radius)).collect();
    let waps: Vec<Point> = (0..config.n_waps).map(|_| uniform_in_disc(&mut rng, radius)).collect();
    let users: Vec<Point> = (0..config.n_users).map(|_| uniform_in_disc(&mut rng, radius)).collect();
    Topology::from_positions(sbs, waps, users, config.sbs_coverage_m)
}

/// Path loss in dB at `distance_m`, clamped below at the minimum link distance.
pub fn path_loss_db(distance_m: f64, band: Band, config: &ScenarioConfig) -> f64 {
    let d = distance_m.max(config.min_link_distance_m);
    let pl = config.pathloss(band);
    pl.intercept_db + pl.slope_db * math::log10(d)
}

/// Linear power gains `h[user][bs]` per band, held fixed for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    n_users: usize,
    n_bs: usize,
    licensed: Vec<f64>,
    unlicensed: Vec<f64>,
}

impl ChannelRealization {
    pub fn from_gains(n_users: usize, n_bs: usize, licensed: Vec<f64>, unlicensed: Vec<f64>) -> Self {
        assert_eq!(licensed.len(), n_users * n_bs);
        assert_eq!(unlicensed.len(), n_users * n_bs);
        Self { n_users, n_bs, licensed, unlicensed }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    #[inline]
    pub fn gain(&self, user: usize, bs: usize, band: Band) -> f64 {
        let idx = user * self.n_bs + bs;
        match band {
            Band::Licensed => self.licensed[idx],
            Band::Unlicensed => self.unlicensed[idx],
        }
    }
}

/// Unit-mean exponential sample: the power of a unit-variance Rayleigh tap.
pub fn exponential_fading(rng: &mut SimRng) -> f64 {
    // 1 - u lies in (0, 1], keeping the gain finite.
    let u: f64 = rng.gen();
    -math::ln(1.0 - u)
}

/// Draws Rayleigh-faded gains for every (user, BS, band) triple.
pub fn draw_channel(topology: &Topology, config: &ScenarioConfig, seed: u64) -> ChannelRealization {
    let mut rng = crate::rng::stream(seed, crate::rng::tag::CHANNEL, 0);
    draw_channel_with(topology, config, || {
        // Strictly positive: a zero gain would make a link vanish entirely.
        exponential_fading(&mut rng).max(f64::MIN_POSITIVE)
    })
}

/// Channel with an explicit fading source. Draw order is user-major, then
/// BS, then licensed before unlicensed.
pub fn draw_channel_with(
    topology: &Topology,
    config: &ScenarioConfig,
    mut fading: impl FnMut() -> f64,
) -> ChannelRealization {
    let n_users = topology.n_users();
    let n_bs = topology.n_bs();
    let mut licensed = Vec::with_capacity(n_users * n_bs);
    let mut unlicensed = Vec::with_capacity(n_users * n_bs);
    for u in &topology.user_positions {
        for bs in 0..n_bs {
            let d = u.distance(&topology.bs_position(bs));
            licensed.push(math::db_to_gain(path_loss_db(d, Band::Licensed, config)) * fading());
            unlicensed.push(math::db_to_gain(path_loss_db(d, Band::Unlicensed, config)) * fading());
        }
    }
    ChannelRealization { n_users, n_bs, licensed, unlicensed }
}
