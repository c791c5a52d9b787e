//! Per-channel discretized Laplace entropy model.
//!
//! The same mass function drives both the differentiable rate estimate
//! used in training and the fixed-point tables used by the range coder.

use crate::bitstream::{quantize_pmf, Pmf16};
use crate::error::{Error, Result};
use crate::sparse::Matrix;

/// Probability floor (2⁻¹⁶) applied to every symbol mass in rate estimates.
pub const RATE_FLOOR: f64 = 1.0 / 65536.0;

/// Quantized latent values are clamped to `[-QMAX, QMAX]`.
pub const QMAX: i32 = 64;

/// Alphabet size of the latent symbol coder.
pub const ALPHABET: usize = (2 * QMAX + 1) as usize;

pub fn laplace_cdf(x: f64, mu: f64, b: f64) -> f64 {
    let t = (x - mu) / b;
    if t < 0.0 {
        0.5 * t.exp()
    } else {
        1.0 - 0.5 * (-t).exp()
    }
}

/// Mass of the unit bin around `v`, `F(v + ½) − F(v − ½)`, together with
/// its partial derivatives with respect to `v` and the scale `b`.
///
/// Computed on `|v − μ|` so that both tails are evaluated without
/// cancellation.
pub fn laplace_mass_grad(v: f64, mu: f64, b: f64) -> (f64, f64, f64) {
    let t = v - mu;
    let a = t.abs();
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    let b2 = b * b;
    if a >= 0.5 {
        let e1 = (-(a - 0.5) / b).exp();
        let e2 = (-(a + 0.5) / b).exp();
        let p = 0.5 * (e1 - e2);
        let dp_da = -p / b;
        let dp_db = 0.5 * (e1 * (a - 0.5) - e2 * (a + 0.5)) / b2;
        (p, sign * dp_da, dp_db)
    } else {
        let e3 = (-(0.5 - a) / b).exp();
        let e2 = (-(0.5 + a) / b).exp();
        let p = 1.0 - 0.5 * e3 - 0.5 * e2;
        let dp_da = (e2 - e3) / (2.0 * b);
        let dp_db = -0.5 * (e3 * (0.5 - a) + e2 * (0.5 + a)) / b2;
        (p, sign * dp_da, dp_db)
    }
}

/// `−log2 p(v)` with the probability floor.
pub fn symbol_bits(v: f64, mu: f64, b: f64) -> f64 {
    -laplace_mass_grad(v, mu, b).0.max(RATE_FLOOR).log2()
}

/// Real-valued pmf over `[-QMAX, QMAX]`; the two end symbols absorb the
/// tail mass beyond the clamp.
pub fn channel_pmf(mu: f64, b: f64) -> Vec<f64> {
    (-QMAX..=QMAX)
        .map(|v| {
            let v = v as f64;
            let hi = if v as i32 == QMAX { 1.0 } else { laplace_cdf(v + 0.5, mu, b) };
            let lo = if v as i32 == -QMAX { 0.0 } else { laplace_cdf(v - 0.5, mu, b) };
            (hi - lo).max(0.0)
        })
        .collect()
}

/// Learned `(μ_c, log b_c)` per latent channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyModel {
    pub mu: Vec<f64>,
    pub log_b: Vec<f64>,
}

impl EntropyModel {
    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// Σ −log2 p over every element of `values` (rows × channels).
    pub fn rate_bits(&self, values: &Matrix) -> Result<f64> {
        if values.cols != self.channels() {
            return Err(Error::Shape(format!("rate_bits: {} columns for {} channels", values.cols, self.channels())));
        }
        let mut bits = 0.0;
        for row in values.data.chunks_exact(values.cols.max(1)) {
            for (c, &v) in row.iter().enumerate() {
                bits += symbol_bits(v, self.mu[c], self.log_b[c].exp());
            }
        }
        Ok(bits)
    }

    /// Fixed-point coding tables, one per channel.
    pub fn pmfs(&self) -> Result<Vec<Pmf16>> {
        self.mu
            .iter()
            .zip(&self.log_b)
            .map(|(&m, &lb)| quantize_pmf(&channel_pmf(m, lb.exp())))
            .collect()
    }
}
