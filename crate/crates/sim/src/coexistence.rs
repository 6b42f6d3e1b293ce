//! WiFi coexistence table: for each (stations, per-station requirement)
//! pair, the DCF transmission probability, saturation throughput and the
//! LTE-U airtime share that still meets the requirement.

use lteu_core::scenario::WifiConfig;
use lteu_core::wifi::{self, WifiError, WifiParams};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoexistenceRow {
    pub n_wifi: usize,
    pub rate_req_bps: f64,
    pub tx_probability: f64,
    pub saturation_bps: f64,
    pub lte_fraction: f64,
    pub overload: bool,
}

/// Rows ordered by station count, then requirement.
pub fn coexistence_sweep(cfg: &WifiConfig, n_wifi: &[usize], rates_bps: &[f64]) -> Result<Vec<CoexistenceRow>, WifiError> {
    let mut rows = Vec::with_capacity(n_wifi.len() * rates_bps.len());
    for &n in n_wifi {
        let params = WifiParams::solve(cfg, n)?;
        for &r in rates_bps {
            let l = wifi::lte_fraction(&params, r);
            rows.push(CoexistenceRow {
                n_wifi: n,
                rate_req_bps: r,
                tx_probability: params.tau_prob,
                saturation_bps: l.saturation_bps,
                lte_fraction: l.fraction,
                overload: l.overload,
            });
        }
    }
    Ok(rows)
}
