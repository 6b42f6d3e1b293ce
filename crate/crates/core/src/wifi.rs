//! WiFi saturation throughput under DCF with RTS/CTS and the LTE-U duty
//! cycle that keeps every WiFi station at its rate requirement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::scenario::{ScenarioConfig, WifiConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WifiError {
    #[error("invalid backoff parameters: {0}")]
    InvalidParameters(&'static str),
    #[error("transmission-probability fixed point did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
}

/// One contention domain: `n_wifi` saturated stations on a shared channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WifiParams {
    pub n_wifi: usize,
    /// Per-slot transmission probability of each station.
    pub tau_prob: f64,
    pub slot_time_s: f64,
    pub sifs_s: f64,
    pub difs_s: f64,
    pub prop_delay_s: f64,
    pub rts_bits: f64,
    pub cts_bits: f64,
    pub ack_bits: f64,
    pub header_bits: f64,
    pub payload_bits: f64,
    pub payload_info_bits: f64,
    pub channel_bps: f64,
}

impl WifiParams {
    pub fn with_tau(wifi: &WifiConfig, n_wifi: usize, tau_prob: f64) -> Self {
        Self {
            n_wifi,
            tau_prob,
            slot_time_s: wifi.slot_time_s,
            sifs_s: wifi.sifs_s,
            difs_s: wifi.difs_s,
            prop_delay_s: wifi.prop_delay_s,
            rts_bits: wifi.rts_bits,
            cts_bits: wifi.cts_bits,
            ack_bits: wifi.ack_bits,
            header_bits: wifi.header_bits,
            payload_bits: wifi.payload_bits,
            payload_info_bits: wifi.payload_info_bits,
            channel_bps: wifi.channel_bps,
        }
    }

    /// Parameters with the transmission probability solved from the backoff
    /// fixed point.
    pub fn solve(wifi: &WifiConfig, n_wifi: usize) -> Result<Self, WifiError> {
        let tau = tx_probability(wifi.cw_min, wifi.backoff_stages, n_wifi)?;
        Ok(Self::with_tau(wifi, n_wifi, tau))
    }

    /// Probability that a slot carries at least one transmission.
    pub fn p_tr(&self) -> f64 {
        1.0 - math::powi(1.0 - self.tau_prob, self.n_wifi as i32)
    }

    /// Probability that a busy slot carries exactly one transmission.
    pub fn p_s(&self) -> f64 {
        let p_tr = self.p_tr();
        if p_tr <= 0.0 {
            // limit tau -> 0: a lone transmission always succeeds
            return 1.0;
        }
        let n = self.n_wifi as f64;
        n * self.tau_prob * math::powi(1.0 - self.tau_prob, self.n_wifi as i32 - 1) / p_tr
    }
}

/// Transmission probability for stage-0 window `cw_min` and `backoff_stages`
/// doublings, solved jointly with the conditional collision probability
/// `p = 1 - (1 - tau)^(n - 1)`.
pub fn tx_probability(cw_min: u32, backoff_stages: u32, n_wifi: usize) -> Result<f64, WifiError> {
    if cw_min < 2 {
        return Err(WifiError::InvalidParameters("cw_min must be at least 2"));
    }
    if n_wifi == 0 {
        return Err(WifiError::InvalidParameters("need at least one station"));
    }
    let w = cw_min as f64;
    if n_wifi == 1 {
        return Ok(tau_given_collision(w, backoff_stages, 0.0));
    }
    let collision = |p: f64| {
        let tau = tau_given_collision(w, backoff_stages, p);
        1.0 - math::powi(1.0 - tau, n_wifi as i32 - 1)
    };
    // g(p) is decreasing, so plain iteration can overshoot; damp it and
    // shrink the step whenever the residual grows.
    let mut p = 0.0_f64;
    let mut damping = 0.5;
    let mut residual = collision(p) - p;
    for _ in 0..100_000 {
        if residual.abs() < 1e-12 {
            return Ok(tau_given_collision(w, backoff_stages, p));
        }
        let candidate = (p + damping * residual).clamp(0.0, 1.0);
        let next_residual = collision(candidate) - candidate;
        if next_residual.abs() < residual.abs() {
            p = candidate;
            residual = next_residual;
            damping = (damping * 1.2).min(1.0);
        } else {
            damping *= 0.5;
            if damping < 1e-12 {
                break;
            }
        }
    }
    Err(WifiError::NoConvergence { residual: residual.abs() })
}

/// Stationary per-slot transmission probability given collision probability
/// `p`, written without the removable singularity at `p = 1/2`.
pub fn tau_given_collision(w: f64, stages: u32, p: f64) -> f64 {
    let mut geometric = 0.0;
    let mut term = 1.0;
    for _ in 0..stages {
        geometric += term;
        term *= 2.0 * p;
    }
    2.0 / (1.0 + w + p * w * geometric)
}

/// Mean busy time of a successful RTS/CTS exchange.
pub fn t_success(params: &WifiParams) -> f64 {
    let c = params.channel_bps;
    params.rts_bits / c
        + params.cts_bits / c
        + (params.header_bits + params.payload_bits) / c
        + params.ack_bits / c
        + 3.0 * params.sifs_s
        + params.difs_s
        + 4.0 * params.prop_delay_s
}

/// Mean busy time of a collided RTS.
pub fn t_collision(params: &WifiParams) -> f64 {
    params.rts_bits / params.channel_bps + params.difs_s + params.prop_delay_s
}

/// Aggregate saturation throughput of the domain in bit/s.
pub fn saturation_throughput(params: &WifiParams) -> f64 {
    let p_tr = params.p_tr();
    let p_s = params.p_s();
    let ts = t_success(params);
    let tc = t_collision(params);
    let num = p_tr * p_s * params.payload_info_bits;
    let den = (1.0 - p_tr) * params.slot_time_s + p_tr * p_s * ts + p_tr * (1.0 - p_s) * tc;
    if den <= 0.0 {
        return 0.0;
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LteFraction {
    /// Share of unlicensed airtime given to LTE-U.
    pub fraction: f64,
    /// Saturation throughput of the binding contention domain.
    pub saturation_bps: f64,
    pub n_wifi: usize,
    pub rate_req_bps: f64,
    /// The WiFi stations cannot reach their requirement even with the whole
    /// channel; LTE-U is muted.
    pub overload: bool,
}

impl LteFraction {
    /// Per-station WiFi rate left after LTE-U takes its share.
    pub fn wifi_rate_per_user(&self) -> f64 {
        self.saturation_bps * (1.0 - self.fraction) / self.n_wifi as f64
    }

    /// True when the WiFi stations keep at least their requirement.
    pub fn guarantee_holds(&self) -> bool {
        self.wifi_rate_per_user() >= self.rate_req_bps
    }
}

/// Largest LTE-U airtime share `L` in [0, 1] with
/// `R(N_w) (1 - L) / N_w >= R_w`, checked in floating point.
pub fn lte_fraction(params: &WifiParams, rate_req_bps: f64) -> LteFraction {
    let r = saturation_throughput(params);
    lte_fraction_from_throughput(r, params.n_wifi, rate_req_bps)
}

pub fn lte_fraction_from_throughput(saturation_bps: f64, n_wifi: usize, rate_req_bps: f64) -> LteFraction {
    let n = n_wifi as f64;
    let demand = n * rate_req_bps;
    let mut out = LteFraction {
        fraction: 0.0,
        saturation_bps,
        n_wifi,
        rate_req_bps,
        overload: demand > saturation_bps,
    };
    if out.overload {
        return out;
    }
    let mut l = (1.0 - demand / saturation_bps).clamp(0.0, 1.0);
    // The closed form can land a few ulps either side of the largest value
    // that satisfies the inequality in floating point; walk to it.
    out.fraction = l;
    while l > 0.0 && !out.guarantee_holds() {
        l = math::next_down(l).max(0.0);
        out.fraction = l;
    }
    if !out.guarantee_holds() {
        return out;
    }
    // Nonnegative floats order like their bit patterns, so bisect on those.
    let holds = |f: f64| LteFraction { fraction: f, ..out }.guarantee_holds();
    if holds(1.0) {
        out.fraction = 1.0;
        return out;
    }
    let (mut lo, mut hi) = (l.to_bits(), 1.0_f64.to_bits());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(f64::from_bits(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    out.fraction = f64::from_bits(lo);
    out
}

/// Duty cycle for the whole network: one contention domain per WAP, each
/// with `wifi_users_per_wap` stations; the tightest domain binds.
pub fn network_lte_fraction(config: &ScenarioConfig) -> Result<LteFraction, WifiError> {
    let mut binding: Option<LteFraction> = None;
    for _wap in 0..config.n_waps.max(1) {
        let params = WifiParams::solve(&config.wifi, config.wifi_users_per_wap)?;
        let l = lte_fraction(&params, config.wifi_rate_req_bps);
        if binding.is_none_or(|b| l.fraction < b.fraction) {
            binding = Some(l);
        }
    }
    Ok(binding.expect("at least one contention domain"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_params(n: usize, tau: f64) -> WifiParams {
        WifiParams::with_tau(&WifiConfig::default(), n, tau)
    }

    #[test]
    fn single_station_has_closed_form_tau() {
        assert_eq!(tx_probability(16, 6, 1).unwrap(), 2.0 / 17.0);
        assert_eq!(tx_probability(32, 3, 1).unwrap(), 2.0 / 33.0);
    }

    #[test]
    fn invalid_backoff_is_rejected() {
        assert!(tx_probability(1, 6, 4).is_err());
        assert!(tx_probability(16, 6, 0).is_err());
    }

    #[test]
    fn tau_formula_is_regular_at_half() {
        let w = 16.0;
        let at = tau_given_collision(w, 6, 0.5);
        let near = tau_given_collision(w, 6, 0.5 + 1e-9);
        assert!((at - near).abs() < 1e-9);
        // closed form with the singular expression away from 1/2
        let p: f64 = 0.3;
        let bianchi = 2.0 * (1.0 - 2.0 * p) / ((1.0 - 2.0 * p) * (w + 1.0) + p * w * (1.0 - (2.0 * p).powi(6)));
        assert!((tau_given_collision(w, 6, p) - bianchi).abs() < 1e-15);
    }

    #[test]
    fn collision_time_table_value() {
        let p = table_params(4, 0.1);
        let tc = t_collision(&p);
        assert!((tc - (352.0 / 130e6 + 34e-6)).abs() < 1e-18);
        assert!((tc * 1e6 - 36.71).abs() < 0.005);
        let ts = t_success(&p);
        let expect = (352.0 + 304.0 + 416.0 + 12000.0 + 304.0) / 130e6 + 3.0 * 16e-6 + 34e-6;
        assert!((ts - expect).abs() < 1e-18);
    }

    #[test]
    fn propagation_delay_terms() {
        let mut p = table_params(4, 0.1);
        let ts0 = t_success(&p);
        let tc0 = t_collision(&p);
        p.prop_delay_s = 1e-6;
        assert!((t_success(&p) - ts0 - 4e-6).abs() < 1e-18);
        assert!((t_collision(&p) - tc0 - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn faster_channel_shortens_busy_times() {
        let p = table_params(4, 0.1);
        let mut q = p.clone();
        q.channel_bps *= 2.0;
        assert!(t_success(&q) < t_success(&p));
        assert!(t_collision(&q) < t_collision(&p));
    }

    #[test]
    fn always_transmitting_single_station() {
        let p = table_params(1, 1.0);
        assert_eq!(p.p_tr(), 1.0);
        assert_eq!(p.p_s(), 1.0);
        let r = saturation_throughput(&p);
        assert!((r - p.payload_info_bits / t_success(&p)).abs() < 1e-6);
    }

    #[test]
    fn silent_stations_carry_nothing() {
        assert_eq!(saturation_throughput(&table_params(4, 0.0)), 0.0);
        assert!(saturation_throughput(&table_params(4, 1e-12)) < 1.0);
    }

    #[test]
    fn lte_fraction_boundaries() {
        let r = 80e6;
        let l = lte_fraction_from_throughput(r, 4, 0.0);
        assert_eq!(l.fraction, 1.0);
        // demand equals capacity: only fractions that vanish next to 1 fit
        let l = lte_fraction_from_throughput(r, 4, r / 4.0);
        assert!(l.fraction < 1e-15);
        assert!(!l.overload);
        assert!(l.guarantee_holds());
        let l = lte_fraction_from_throughput(r, 4, r / 8.0);
        assert!((l.fraction - 0.5).abs() < 1e-15);
        assert!(l.guarantee_holds());
        let l = lte_fraction_from_throughput(r, 4, r);
        assert!(l.overload);
        assert_eq!(l.fraction, 0.0);
        assert!(!l.guarantee_holds());
    }

    #[test]
    fn guarantee_holds_exactly_on_many_requirements() {
        for i in 0..2000 {
            let r_w = 1e3 + 17_345.3 * i as f64;
            let l = lte_fraction_from_throughput(91_234_567.89, 4, r_w);
            if !l.overload {
                assert!(l.guarantee_holds(), "r_w = {r_w}");
                assert!(l.wifi_rate_per_user() <= r_w * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn probabilities_stay_in_unit_interval() {
        for n in 1..30 {
            for k in 1..100 {
                let p = table_params(n, k as f64 / 100.0);
                assert!((0.0..=1.0).contains(&p.p_tr()));
                assert!((0.0..=1.0 + 1e-12).contains(&p.p_s()));
            }
        }
    }

    #[test]
    fn network_fraction_uses_config() {
        let c = ScenarioConfig::default();
        let l = network_lte_fraction(&c).unwrap();
        assert!(l.fraction > 0.0 && l.fraction < 1.0);
        assert!(l.guarantee_holds());
    }
}
