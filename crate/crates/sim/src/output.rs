//! CSV and summary writers. Every CSV starts with a header row and renders
//! floats through [`sig9`].

use std::io::Write;

use lteu_core::harness::RoundRecord;
use lteu_core::UserRates;

use crate::coexistence::CoexistenceRow;
use crate::fmt::{opt_sig9, sig9};
use crate::monte_carlo::Aggregate;
use crate::sweep::SweepRow;

pub type CsvResult = Result<(), csv::Error>;

pub const TRACE_HEADER: [&str; 8] = ["round", "bs", "action", "e_alpha", "r_alpha", "e_beta", "r_beta", "utility"];

/// One row per round and BS.
pub fn write_trace<W: Write>(out: W, records: &[RoundRecord]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        for t in &r.traces {
            w.write_record([
                r.t.to_string(),
                t.bs.to_string(),
                t.action.to_string(),
                sig9(t.e_alpha),
                sig9(t.r_alpha),
                sig9(t.e_beta),
                sig9(t.r_beta),
                sig9(t.utility),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF of sorted samples: the i-th smallest of n gets (i + 1) / n.
pub fn cdf_points(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

/// `(label, sorted samples)` series, one CSV row per sample.
pub fn write_cdf<W: Write>(out: W, series: &[(String, Vec<f64>)]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["algorithm", "rate_bps", "cdf"])?;
    for (label, samples) in series {
        for (x, p) in cdf_points(samples) {
            w.write_record([label.clone(), sig9(x), sig9(p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bs_cell(bs: Option<usize>) -> String {
    bs.map(|b| b.to_string()).unwrap_or_default()
}

/// One row per user; an empty serving cell means the direction is unserved.
pub fn write_user_rates<W: Write>(out: W, rates: &UserRates) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user", "dl_bps", "ul_bps", "serving_dl", "serving_ul"])?;
    for i in 0..rates.n_users() {
        w.write_record([
            i.to_string(),
            sig9(rates.r_dl[i]),
            sig9(rates.r_ul[i]),
            bs_cell(rates.serving_dl[i]),
            bs_cell(rates.serving_ul[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 17] = [
    "axis",
    "value",
    "algorithm",
    "runs",
    "lte_fraction",
    "sum_rate_mean",
    "sum_rate_median",
    "sum_rate_ci_low",
    "sum_rate_ci_high",
    "median_rate_mean",
    "median_rate_median",
    "median_rate_ci_low",
    "median_rate_ci_high",
    "converged_runs",
    "mean_converged_at",
    "decoupled_users_mean",
    "audit_failures",
];

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let a = &r.aggregate;
        w.write_record([
            r.axis.name().to_string(),
            sig9(r.value),
            a.algorithm.name().to_string(),
            a.n_runs.to_string(),
            sig9(a.lte_fraction),
            sig9(a.sum_rate.mean),
            sig9(a.sum_rate.median),
            sig9(a.sum_rate.ci_low),
            sig9(a.sum_rate.ci_high),
            sig9(a.median_rate.mean),
            sig9(a.median_rate.median),
            sig9(a.median_rate.ci_low),
            sig9(a.median_rate.ci_high),
            a.converged_runs.to_string(),
            opt_sig9(a.mean_converged_at),
            sig9(a.mean_decoupled_users),
            a.audit_failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coexistence<W: Write>(out: W, rows: &[CoexistenceRow]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_wifi", "r_w_bps", "tx_probability", "saturation_bps", "lte_fraction", "overload"])?;
    for r in rows {
        w.write_record([
            r.n_wifi.to_string(),
            sig9(r.rate_req_bps),
            sig9(r.tx_probability),
            sig9(r.saturation_bps),
            sig9(r.lte_fraction),
            r.overload.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `key = value` lines.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn text(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.lines.push((key.into(), value.to_string()));
        self
    }

    pub fn float(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.text(key, sig9(value))
    }

    pub fn aggregate(&mut self, prefix: &str, a: &Aggregate) -> &mut Self {
        self.text(format!("{prefix}.runs"), a.n_runs)
            .float(format!("{prefix}.sum_rate_mean"), a.sum_rate.mean)
            .float(format!("{prefix}.sum_rate_ci_low"), a.sum_rate.ci_low)
            .float(format!("{prefix}.sum_rate_ci_high"), a.sum_rate.ci_high)
            .float(format!("{prefix}.median_rate_mean"), a.median_rate.mean)
            .float(format!("{prefix}.median_rate_ci_low"), a.median_rate.ci_low)
            .float(format!("{prefix}.median_rate_ci_high"), a.median_rate.ci_high)
            .text(format!("{prefix}.converged_runs"), a.converged_runs)
            .text(format!("{prefix}.mean_converged_at"), opt_sig9(a.mean_converged_at))
            .text(format!("{prefix}.audit_failures"), a.audit_failures)
    }

    pub fn render(&self) -> String {
        let width = self.lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.lines.iter().map(|(k, v)| format!("{k:<width$} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_ends_at_one() {
        let pts = cdf_points(&[1.0, 2.0, 2.0, 5.0]);
        assert_eq!(pts.iter().map(|p| p.1).collect::<Vec<_>>(), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn user_rates_csv_layout() {
        let rates = UserRates {
            r_dl: vec![1.5e6, 0.0],
            r_ul: vec![2e5, 0.0],
            serving_dl: vec![Some(2), None],
            serving_ul: vec![Some(0), None],
        };
        let mut buf = Vec::new();
        write_user_rates(&mut buf, &rates).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "user,dl_bps,ul_bps,serving_dl,serving_ul\n0,1500000,200000,2,0\n1,0,0,,\n"
        );
    }

    #[test]
    fn summary_aligns_keys() {
        let mut s = Summary::default();
        s.text("a", 1).float("longer", 0.5);
        assert_eq!(s.render(), "a      = 1\nlonger = 0.5\n");
    }
}
