//! One-parameter sweeps: every (axis value, algorithm) cell is a
//! Monte-Carlo batch.

use std::fmt;
use std::str::FromStr;

use lteu_core::harness::{Algorithm, HarnessError};
use lteu_core::ScenarioConfig;
use serde::Serialize;

use crate::monte_carlo::{monte_carlo, Aggregate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NSbs,
    NUsers,
    /// WiFi per-station rate requirement in bit/s.
    RW,
    /// WiFi stations per access point.
    NWifi,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::NSbs, Axis::NUsers, Axis::RW, Axis::NWifi];

    pub fn name(self) -> &'static str {
        match self {
            Axis::NSbs => "n_sbs",
            Axis::NUsers => "n_users",
            Axis::RW => "r_w",
            Axis::NWifi => "n_wifi",
        }
    }

    /// `template` with the axis set to `value`. Count axes need a
    /// nonnegative integer.
    pub fn apply(self, template: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, SweepError> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(SweepError::NotACount { axis: self.name(), value })
            }
        };
        let mut c = template.clone();
        match self {
            Axis::NSbs => c.n_sbs = count()?,
            Axis::NUsers => c.n_users = count()?,
            Axis::RW => c.wifi_rate_req_bps = value,
            Axis::NWifi => c.wifi_users_per_wap = count()?,
        }
        c.validate().map_err(HarnessError::from)?;
        Ok(c)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown sweep axis `{0}` (expected n_sbs, n_users, r_w or n_wifi)")]
pub struct UnknownAxis(String);

impl FromStr for Axis {
    type Err = UnknownAxis;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Axis::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| UnknownAxis(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("axis {axis} needs a nonnegative integer, got {value}")]
    NotACount { axis: &'static str, value: f64 },
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub aggregate: Aggregate,
}

/// Full cross product of `values` × `algorithms`, rows ordered by value
/// then algorithm. Every cell uses the same seeds.
pub fn sweep(
    template: &ScenarioConfig,
    axis: Axis,
    values: &[f64],
    algorithms: &[Algorithm],
    n_runs: usize,
    base_seed: u64,
) -> Result<Vec<SweepRow>, SweepError> {
    let mut rows = Vec::with_capacity(values.len() * algorithms.len());
    for &value in values {
        let config = axis.apply(template, value)?;
        for &alg in algorithms {
            let aggregate = monte_carlo(&config, alg, n_runs, base_seed)?;
            rows.push(SweepRow { axis, value, aggregate });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_round_trip() {
        for a in Axis::ALL {
            assert_eq!(a.name().parse::<Axis>().unwrap(), a);
        }
        assert!("bogus".parse::<Axis>().is_err());
    }

    #[test]
    fn count_axes_reject_fractions() {
        let t = ScenarioConfig::default();
        assert!(matches!(Axis::NUsers.apply(&t, 2.5), Err(SweepError::NotACount { .. })));
        assert_eq!(Axis::NWifi.apply(&t, 6.0).unwrap().wifi_users_per_wap, 6);
        assert_eq!(Axis::RW.apply(&t, 2.5e6).unwrap().wifi_rate_req_bps, 2.5e6);
    }
}
