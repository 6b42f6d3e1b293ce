//! Text checkpoints of reservoir/readout pairs.
//!
//! ```text
//! lteu-esn-checkpoint 1
//! network alpha
//! reservoir <n_units> <input_dim>
//! w_in <rows> <cols>
//! <row-major values, one matrix row per line>
//! w <n> <n>
//! ...
//! state 1 <n>
//! <values>
//! input 1 <input_dim>            (optional: the input last fed in)
//! <values>
//! readout <n_actions> <width>
//! rule fixed <lambda>            | rule robbins_monro <c> <p>
//! w_out <n_actions> <width>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a checkpoint
//! reloads bit for bit.

use std::fmt::Write as _;

use lteu_core::esn::{LearningRate, Readout, Reservoir, SparseMatrix};
use lteu_core::EsnAgent;
use thiserror::Error;

pub const MAGIC: &str = "lteu-esn-checkpoint 1";

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unexpected end of checkpoint")]
    Truncated,
}

/// One named reservoir/readout pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub reservoir: Reservoir,
    pub readout: Readout,
    /// Last input, for networks whose owner keeps it between rounds.
    pub input: Option<Vec<f64>>,
}

/// Everything an [`EsnAgent`] needs to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCheckpoint {
    pub alpha: (Reservoir, Readout),
    pub beta: (Reservoir, Readout),
    pub beta_input: Vec<f64>,
}

fn write_matrix(out: &mut String, label: &str, rows: usize, cols: usize, values: &[f64]) {
    writeln!(out, "{label} {rows} {cols}").unwrap();
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
}

pub fn write_networks(networks: &[Network]) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    for net in networks {
        let (res, ro) = (&net.reservoir, &net.readout);
        writeln!(out, "network {}", net.name).unwrap();
        writeln!(out, "reservoir {} {}", res.n_units, res.input_dim).unwrap();
        write_matrix(&mut out, "w_in", res.n_units, res.input_dim, &res.w_in);
        write_matrix(&mut out, "w", res.n_units, res.n_units, &res.w.to_dense());
        write_matrix(&mut out, "state", 1, res.n_units, &res.state);
        if let Some(input) = &net.input {
            write_matrix(&mut out, "input", 1, res.input_dim, input);
        }
        writeln!(out, "readout {} {}", ro.n_actions, ro.width).unwrap();
        match ro.rule {
            LearningRate::Fixed(l) => writeln!(out, "rule fixed {l}").unwrap(),
            LearningRate::RobbinsMonro { c, p } => writeln!(out, "rule robbins_monro {c} {p}").unwrap(),
        }
        write_matrix(&mut out, "w_out", ro.n_actions, ro.width, &ro.w_out);
    }
    out
}

/// Both networks of an ESN agent, named `alpha` and `beta`.
pub fn write_agent(agent: &EsnAgent) -> String {
    write_networks(&[
        Network {
            name: "alpha".into(),
            reservoir: agent.alpha_reservoir.clone(),
            readout: agent.alpha_readout.clone(),
            input: None,
        },
        Network {
            name: "beta".into(),
            reservoir: agent.beta_reservoir.clone(),
            readout: agent.beta_readout.clone(),
            input: Some(agent.beta_input().to_vec()),
        },
    ])
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        loop {
            let (i, l) = self.inner.next().ok_or(CheckpointError::Truncated)?;
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Ok(l);
            }
        }
    }

    fn peek_done(&mut self) -> bool {
        self.peek_keyword().is_none()
    }

    /// First word of the next content line, without consuming it.
    fn peek_keyword(&self) -> Option<&'a str> {
        self.inner
            .clone()
            .map(|(_, l)| l.trim())
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .and_then(|l| l.split_whitespace().next())
    }

    fn err(&self, message: impl Into<String>) -> CheckpointError {
        CheckpointError::Syntax { line: self.line, message: message.into() }
    }

    /// `<keyword> <args...>`, returning the args.
    fn keyword(&mut self, kw: &str) -> Result<Vec<&'a str>, CheckpointError> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(kw) {
            return Err(self.err(format!("expected `{kw}`")));
        }
        Ok(parts.collect())
    }

    fn dims(&mut self, kw: &str, n: usize) -> Result<Vec<usize>, CheckpointError> {
        let args = self.keyword(kw)?;
        if args.len() != n {
            return Err(self.err(format!("`{kw}` takes {n} dimensions")));
        }
        args.iter().map(|a| a.parse().map_err(|_| self.err(format!("bad dimension `{a}`")))).collect()
    }

    fn floats(&mut self, s: &str) -> Result<Vec<f64>, CheckpointError> {
        s.split_whitespace().map(|v| v.parse().map_err(|_| self.err(format!("bad value `{v}`")))).collect()
    }

    fn matrix(&mut self, kw: &str, rows: usize, cols: usize) -> Result<Vec<f64>, CheckpointError> {
        let d = self.dims(kw, 2)?;
        if d != [rows, cols] {
            return Err(self.err(format!("`{kw}` should be {rows}x{cols}, found {}x{}", d[0], d[1])));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let row = self.floats(l)?;
            if row.len() != cols {
                return Err(self.err(format!("expected {cols} values, found {}", row.len())));
            }
            values.extend(row);
        }
        Ok(values)
    }
}

pub fn read_networks(text: &str) -> Result<Vec<Network>, CheckpointError> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    if lines.next()? != MAGIC {
        return Err(lines.err("not an ESN checkpoint"));
    }
    let mut out = Vec::new();
    while !lines.peek_done() {
        let name = lines.keyword("network")?.join(" ");
        let d = lines.dims("reservoir", 2)?;
        let (n, input_dim) = (d[0], d[1]);
        let w_in = lines.matrix("w_in", n, input_dim)?;
        let w = SparseMatrix::from_dense(n, &lines.matrix("w", n, n)?);
        let state = lines.matrix("state", 1, n)?;
        let input = match lines.peek_keyword() {
            Some("input") => Some(lines.matrix("input", 1, input_dim)?),
            _ => None,
        };
        let d = lines.dims("readout", 2)?;
        let (n_actions, width) = (d[0], d[1]);
        if width != n + input_dim {
            return Err(lines.err("readout width must be n_units + input_dim"));
        }
        let rule = {
            let args = lines.keyword("rule")?;
            let nums = lines.floats(&args.get(1..).unwrap_or_default().join(" "))?;
            match (args.first().copied(), nums.as_slice()) {
                (Some("fixed"), [l]) => LearningRate::Fixed(*l),
                (Some("robbins_monro"), [c, p]) => LearningRate::RobbinsMonro { c: *c, p: *p },
                _ => return Err(lines.err("rule must be `fixed <l>` or `robbins_monro <c> <p>`")),
            }
        };
        let w_out = lines.matrix("w_out", n_actions, width)?;
        out.push(Network {
            name,
            reservoir: Reservoir { n_units: n, input_dim, w_in, w, state },
            readout: Readout { n_actions, width, w_out, rule },
            input,
        });
    }
    Ok(out)
}

/// The `alpha` and `beta` networks of an agent checkpoint; `beta` must
/// carry its input.
pub fn read_agent(text: &str) -> Result<AgentCheckpoint, CheckpointError> {
    let mut nets = read_networks(text)?;
    let mut take = |name: &str| {
        let i = nets.iter().position(|n| n.name == name).ok_or(CheckpointError::Syntax {
            line: 0,
            message: format!("no `{name}` network"),
        })?;
        Ok::<_, CheckpointError>(nets.remove(i))
    };
    let alpha = take("alpha")?;
    let beta = take("beta")?;
    let beta_input = beta
        .input
        .ok_or(CheckpointError::Syntax { line: 0, message: "`beta` network has no input".into() })?;
    Ok(AgentCheckpoint { alpha: (alpha.reservoir, alpha.readout), beta: (beta.reservoir, beta.readout), beta_input })
}

#[cfg(test)]
mod tests {
    use super::*;
    use lteu_core::esn::{init, EsnParams};

    fn network(seed: u64, rule: LearningRate) -> Network {
        let params =
            EsnParams { n_units: 7, input_dim: 3, n_actions: 4, density: 0.5, spectral_radius: 0.8, input_scaling: 0.3, rule };
        let (mut reservoir, readout) = init(&params, seed).unwrap();
        reservoir.update(&[0.1, -0.7, 1.0]).unwrap();
        Network { name: format!("net{seed}"), reservoir, readout, input: None }
    }

    #[test]
    fn round_trip_is_exact() {
        let mut with_input = network(2, LearningRate::RobbinsMonro { c: 0.5, p: 0.75 });
        with_input.input = Some(vec![0.25, -1.5, 1.0]);
        let nets = vec![network(1, LearningRate::Fixed(0.08)), with_input];
        let text = write_networks(&nets);
        assert_eq!(read_networks(&text).unwrap(), nets);
    }

    #[test]
    fn header_carries_dimensions() {
        let text = write_networks(&[network(3, LearningRate::Fixed(0.1))]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[..4], &[MAGIC, "network net3", "reservoir 7 3", "w_in 7 3"]);
        assert!(text.contains("\nw 7 7\n") && text.contains("\nstate 1 7\n") && text.contains("\nw_out 4 10\n"));
    }

    #[test]
    fn malformed_input_is_reported() {
        assert!(read_networks("garbage").is_err());
        let text = write_networks(&[network(4, LearningRate::Fixed(0.1))]);
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert_eq!(read_networks(&cut), Err(CheckpointError::Truncated));
        let bad = text.replacen("w_in 7 3", "w_in 7 4", 1);
        assert!(matches!(read_networks(&bad), Err(CheckpointError::Syntax { line: 4, .. })));
    }
}
