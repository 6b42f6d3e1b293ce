//! Echo state network: a fixed sparse random reservoir and a linear readout
//! trained online by gradient steps, one action row at a time.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::rng::{derive_seed, SimRng};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsnError {
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action {action} out of range for {n_actions} readout rows")]
    ActionOutOfRange { action: usize, n_actions: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("spectral radius estimate did not settle")]
    NoConvergence,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let x = dense[i * n + j];
                if x != 0.0 {
                    cols.push(j);
                    vals.push(x);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[i * self.n + self.cols[k]] = self.vals[k];
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.vals.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Spectral radius estimate from the long-run growth rate of `||W^k x||`.
///
/// Plain power iteration stalls when the dominant eigenvalues form a complex
/// pair, which is the typical case for random matrices; the averaged growth
/// rate still converges. Returns `None` when two successive windows disagree
/// by more than 0.1 %.
pub fn spectral_radius(w: &SparseMatrix, seed: u64) -> Option<f64> {
    let n = w.n;
    if n == 0 {
        return Some(0.0);
    }
    let mut rng = crate::rng::stream(seed, 0x7261_6469, 0);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut y = vec![0.0; n];
    let normalize = |v: &mut [f64]| {
        let s = math::sqrt(math::norm_sq(v));
        if s > 0.0 {
            v.iter_mut().for_each(|e| *e /= s);
        }
        s
    };
    normalize(&mut x);
    const BURN_IN: usize = 200;
    const WINDOW: usize = 1000;
    let window_mean = |x: &mut Vec<f64>, y: &mut Vec<f64>| -> Option<f64> {
        let mut log_sum = 0.0;
        for _ in 0..WINDOW {
            w.mul_vec_into(x, y);
            let s = normalize(y);
            if s == 0.0 {
                return None;
            }
            log_sum += math::ln(s);
            core::mem::swap(x, y);
        }
        Some(math::exp(log_sum / WINDOW as f64))
    };
    for _ in 0..BURN_IN {
        w.mul_vec_into(&x, &mut y);
        if normalize(&mut y) == 0.0 {
            // nilpotent direction: the radius is zero
            return Some(0.0);
        }
        core::mem::swap(&mut x, &mut y);
    }
    let first = window_mean(&mut x, &mut y)?;
    let second = window_mean(&mut x, &mut y)?;
    let rho = 0.5 * (first + second);
    (math::abs(first - second) <= 1e-3 * rho.max(1e-300)).then_some(rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub n_units: usize,
    pub input_dim: usize,
    /// `n_units x input_dim`, row-major.
    pub w_in: Vec<f64>,
    pub w: SparseMatrix,
    pub state: Vec<f64>,
}

impl Reservoir {
    fn check_input(&self, x: &[f64]) -> Result<(), EsnError> {
        if x.len() != self.input_dim {
            return Err(EsnError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// `W mu` for the current state.
    pub fn recurrent_drive(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_units];
        self.w.mul_vec_into(&self.state, &mut out);
        out
    }

    /// `W_in x`.
    pub fn input_drive(&self, x: &[f64]) -> Result<Vec<f64>, EsnError> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.n_units];
        self.accumulate_input_block(x, 0, &mut out);
        Ok(out)
    }

    /// Adds `W_in[:, offset..offset + block.len()] * block` to `out`; lets
    /// callers precompute the contribution of each input segment.
    pub fn accumulate_input_block(&self, block: &[f64], offset: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w_in[i * self.input_dim + offset..i * self.input_dim + offset + block.len()];
            *o += math::dot(row, block);
        }
    }

    /// `mu_t = tanh(W mu_{t-1} + W_in x)`.
    pub fn update(&mut self, x: &[f64]) -> Result<&[f64], EsnError> {
        let input = self.input_drive(x)?;
        let recurrent = self.recurrent_drive();
        for ((s, r), i) in self.state.iter_mut().zip(recurrent).zip(input) {
            *s = math::tanh(r + i);
        }
        Ok(&self.state)
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = 0.0);
    }
}

/// Per-iteration step size of the readout gradient update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LearningRate {
    Fixed(f64),
    /// `c / t^p`; `0.5 < p <= 1` gives an infinite sum with a finite sum of
    /// squares.
    RobbinsMonro { c: f64, p: f64 },
}

impl LearningRate {
    pub fn robbins_monro(c: f64, p: f64) -> Result<Self, EsnError> {
        if !(c > 0.0) || !(p > 0.5 && p <= 1.0) {
            return Err(EsnError::InvalidParameter("Robbins-Monro schedule needs c > 0 and 0.5 < p <= 1"));
        }
        Ok(Self::RobbinsMonro { c, p })
    }

    /// Rejects the `1/t` schedule, under which the readout settles at a
    /// constant offset from its target instead of on it.
    pub fn require_unbiased_limit(self) -> Result<Self, EsnError> {
        match self {
            Self::RobbinsMonro { c, p } if c == 1.0 && p == 1.0 => {
                Err(EsnError::InvalidParameter("a 1/t schedule leaves a constant offset in the limit"))
            }
            _ => Ok(self),
        }
    }

    /// Step size at iteration `t >= 1`.
    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            Self::Fixed(l) => l,
            Self::RobbinsMonro { c, p } => c / math::powf(t.max(1) as f64, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub n_actions: usize,
    /// `n_units + input_dim`.
    pub width: usize,
    /// `n_actions x width`, row-major.
    pub w_out: Vec<f64>,
    pub rule: LearningRate,
}

impl Readout {
    pub fn zeros(n_actions: usize, width: usize, rule: LearningRate) -> Self {
        Self { n_actions, width, w_out: vec![0.0; n_actions * width], rule }
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.w_out[action * self.width..(action + 1) * self.width]
    }

    fn check(&self, mu: &[f64], x: &[f64], action: usize) -> Result<(), EsnError> {
        if action >= self.n_actions {
            return Err(EsnError::ActionOutOfRange { action, n_actions: self.n_actions });
        }
        if mu.len() + x.len() != self.width {
            return Err(EsnError::DimensionMismatch { expected: self.width, got: mu.len() + x.len() });
        }
        Ok(())
    }

    fn dot_row(&self, action: usize, mu: &[f64], x: &[f64]) -> f64 {
        let row = self.row(action);
        math::dot(&row[..mu.len()], mu) + math::dot(&row[mu.len()..], x)
    }

    /// `r = W_out[action] . [mu; x]`.
    pub fn predict(&self, mu: &[f64], x: &[f64], action: usize) -> Result<f64, EsnError> {
        self.check(mu, x, action)?;
        Ok(self.dot_row(action, mu, x))
    }

    pub fn predict_all(&self, mu: &[f64], x: &[f64]) -> Result<Vec<f64>, EsnError> {
        self.check(mu, x, 0)?;
        Ok((0..self.n_actions).map(|a| self.dot_row(a, mu, x)).collect())
    }

    /// One gradient step of row `action` toward `target`; returns the
    /// prediction made before the step.
    pub fn train_step(&mut self, mu: &[f64], x: &[f64], action: usize, target: f64, t: u64) -> Result<f64, EsnError> {
        self.check(mu, x, action)?;
        let before = self.dot_row(action, mu, x);
        let step = self.rule.rate(t) * (target - before);
        let row = &mut self.w_out[action * self.width..(action + 1) * self.width];
        for (w, z) in row.iter_mut().zip(mu.iter().chain(x)) {
            *w += step * z;
        }
        Ok(before)
    }
}

/// Construction parameters of a reservoir/readout pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsnParams {
    pub n_units: usize,
    pub input_dim: usize,
    pub n_actions: usize,
    pub density: f64,
    pub spectral_radius: f64,
    /// Multiplies the uniform input weights.
    pub input_scaling: f64,
    pub rule: LearningRate,
}

/// Draws the reservoir and readout. All weights are uniform on `(-1, 1)`
/// (inputs then scaled by `input_scaling`); the recurrent matrix is thinned
/// to `density` and rescaled to the target spectral radius. A draw whose
/// radius estimate does not settle is replaced by one from a derived seed.
pub fn init(params: &EsnParams, seed: u64) -> Result<(Reservoir, Readout), EsnError> {
    if !(params.spectral_radius > 0.0 && params.spectral_radius < 1.0) {
        return Err(EsnError::InvalidParameter("target spectral radius must lie in (0, 1)"));
    }
    if !(params.density > 0.0 && params.density <= 1.0) {
        return Err(EsnError::InvalidParameter("density must lie in (0, 1]"));
    }
    let n = params.n_units;
    for attempt in 0..8u64 {
        let mut rng: SimRng = crate::rng::stream(seed, 0x7265_7376, attempt);
        let w_in: Vec<f64> = (0..n * params.input_dim)
            .map(|_| params.input_scaling * rng.gen_range(-1.0..1.0))
            .collect();
        let dense: Vec<f64> = (0..n * n)
            .map(|_| {
                let keep = params.density >= 1.0 || rng.gen::<f64>() < params.density;
                let v: f64 = rng.gen_range(-1.0..1.0);
                if keep { v } else { 0.0 }
            })
            .collect();
        let width = n + params.input_dim;
        let w_out: Vec<f64> = (0..params.n_actions * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut w = SparseMatrix::from_dense(n, &dense);
        if n > 0 {
            match spectral_radius(&w, derive_seed(seed, attempt, 1)) {
                Some(rho) if rho > 1e-9 => w.scale(params.spectral_radius / rho),
                _ => continue,
            }
        }
        let reservoir = Reservoir { n_units: n, input_dim: params.input_dim, w_in, w, state: vec![0.0; n] };
        let readout = Readout { n_actions: params.n_actions, width, w_out, rule: params.rule };
        return Ok((reservoir, readout));
    }
    Err(EsnError::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, input_dim: usize, density: f64) -> EsnParams {
        EsnParams {
            n_units: n,
            input_dim,
            n_actions: 3,
            density,
            spectral_radius: 0.9,
            input_scaling: 1.0,
            rule: LearningRate::Fixed(0.08),
        }
    }

    #[test]
    fn rescaled_radius_hits_target() {
        for seed in 0..5 {
            let (r, _) = init(&params(100, 4, 0.1), seed).unwrap();
            let rho = spectral_radius(&r.w, 99).unwrap();
            assert!((0.89..=0.91).contains(&rho), "{rho}");
        }
    }

    #[test]
    fn full_density_keeps_every_entry() {
        let (r, _) = init(&params(20, 2, 1.0), 3).unwrap();
        assert_eq!(r.w.nnz(), 400);
    }

    #[test]
    fn init_is_deterministic() {
        assert_eq!(init(&params(30, 3, 0.2), 5).unwrap(), init(&params(30, 3, 0.2), 5).unwrap());
        assert_ne!(init(&params(30, 3, 0.2), 5).unwrap().0.w_in, init(&params(30, 3, 0.2), 6).unwrap().0.w_in);
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = params(10, 2, 0.1);
        p.spectral_radius = 1.0;
        assert!(init(&p, 0).is_err());
        p.spectral_radius = 0.5;
        p.density = 0.0;
        assert!(init(&p, 0).is_err());
    }

    #[test]
    fn zero_state_and_input_stay_zero() {
        let (mut r, _) = init(&params(10, 2, 0.5), 1).unwrap();
        assert!(r.update(&[0.0, 0.0]).unwrap().iter().all(|&s| s == 0.0));
        let big = r.update(&[1e6, -1e6]).unwrap();
        assert!(big.iter().all(|s| s.abs() <= 1.0));
        assert!(r.update(&[1.0]).is_err());
    }

    #[test]
    fn two_unit_hand_case() {
        // W = [[0, 0.5], [-0.5, 0]], W_in = [[1], [2]], mu0 = [0.2, -0.4], x = [1].
        let mut r = Reservoir {
            n_units: 2,
            input_dim: 1,
            w_in: vec![1.0, 2.0],
            w: SparseMatrix::from_dense(2, &[0.0, 0.5, -0.5, 0.0]),
            state: vec![0.2, -0.4],
        };
        let mu = r.update(&[1.0]).unwrap().to_vec();
        assert!((mu[0] - (0.5f64 * -0.4 + 1.0).tanh()).abs() < 1e-15);
        assert!((mu[1] - (-0.5f64 * 0.2 + 2.0).tanh()).abs() < 1e-15);
    }

    #[test]
    fn readout_selector_and_zero_rows() {
        let mut ro = Readout::zeros(2, 3, LearningRate::Fixed(0.5));
        assert_eq!(ro.predict(&[0.3, 0.1], &[7.0], 1).unwrap(), 0.0);
        ro.w_out[2] = 1.0;
        assert_eq!(ro.predict(&[0.3, 0.1], &[7.0], 0).unwrap(), 7.0);
        assert!(ro.predict(&[0.3], &[7.0], 0).is_err());
        assert!(ro.predict(&[0.3, 0.1], &[7.0], 2).is_err());
    }

    #[test]
    fn train_step_single_coordinate() {
        let mut ro = Readout::zeros(2, 3, LearningRate::Fixed(0.5));
        let before = ro.train_step(&[0.0, 0.0], &[1.0], 1, 1.0, 1).unwrap();
        assert_eq!(before, 0.0);
        assert_eq!(ro.row(1), &[0.0, 0.0, 0.5]);
        assert_eq!(ro.row(0), &[0.0, 0.0, 0.0]);
        // zero error leaves the row alone
        let r = ro.predict(&[0.0, 0.0], &[1.0], 1).unwrap();
        let snapshot = ro.clone();
        ro.train_step(&[0.0, 0.0], &[1.0], 1, r, 2).unwrap();
        assert_eq!(ro, snapshot);
    }

    #[test]
    fn repeated_training_converges_geometrically() {
        let mut ro = Readout::zeros(1, 2, LearningRate::Fixed(0.1));
        let (mu, x) = ([0.5], [1.0]);
        let ratio = 1.0 - 0.1 * (0.25 + 1.0);
        let mut err = 3.0;
        for t in 1..=50 {
            ro.train_step(&mu, &x, 0, 3.0, t).unwrap();
            let now = 3.0 - ro.predict(&mu, &x, 0).unwrap();
            assert!((now - err * ratio).abs() < 1e-12);
            err = now;
        }
    }

    #[test]
    fn learning_rate_rules() {
        assert_eq!(LearningRate::Fixed(0.08).rate(12345), 0.08);
        let rm = LearningRate::robbins_monro(1.0, 0.9).unwrap();
        assert_eq!(rm.rate(1), 1.0);
        assert!(LearningRate::robbins_monro(1.0, 0.5).is_err());
        assert!(LearningRate::robbins_monro(1.0, 1.2).is_err());
        assert!(LearningRate::robbins_monro(1.0, 1.0).unwrap().require_unbiased_limit().is_err());
        assert!(rm.require_unbiased_limit().is_ok());
    }

    #[test]
    fn echo_state_property() {
        let (mut a, _) = init(&params(50, 2, 0.2), 8).unwrap();
        let mut b = a.clone();
        b.state = (0..50).map(|i| if i % 2 == 0 { 0.9 } else { -0.9 }).collect();
        let mut rng = crate::rng::stream(1, 2, 3);
        let mut dist = 1.0;
        for _ in 0..400 {
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            a.update(&x).unwrap();
            b.update(&x).unwrap();
            dist = a.state.iter().zip(&b.state).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        }
        assert!(dist < 1e-6, "{dist}");
    }
}
