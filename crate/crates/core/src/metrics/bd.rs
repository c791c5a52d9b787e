//! Bjøntegaard delta bitrate.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BdMethod {
    /// Least-squares cubic of log10(rate) in quality.
    Cubic,
    /// Shape-preserving piecewise cubic Hermite interpolation.
    Pchip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BdOutcome {
    pub percent: f64,
    pub method: BdMethod,
}

/// Smallest-to-largest `|R_kk|` ratio below which a cubic fit is refused.
const MIN_PIVOT_RATIO: f64 = 1e-8;

/// `(quality, log10 rate)` pairs sorted by quality, after validation.
fn prepare(curve: &[(f64, f64)], what: &str) -> Result<Vec<(f64, f64)>> {
    if curve.len() < 4 {
        return Err(Error::Metric(format!("{what} curve has {} points, need at least 4", curve.len())));
    }
    let mut by_rate = curve.to_vec();
    by_rate.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in by_rate.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Metric(format!("{what} curve rates are not strictly increasing")));
        }
    }
    if by_rate.iter().any(|&(r, q)| !(r > 0.0 && r.is_finite() && q.is_finite())) {
        return Err(Error::Metric(format!("{what} curve needs positive rates and finite qualities")));
    }
    let mut pts: Vec<(f64, f64)> = by_rate.iter().map(|&(r, q)| (q, r.log10())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts)
}

/// Cubic in `t = (q − c) / h`, valid over the fitted quality range.
#[derive(Clone, Debug)]
struct CubicFit {
    c: f64,
    h: f64,
    a: [f64; 4],
}

impl CubicFit {
    /// Householder QR least squares; `None` when the design is close to
    /// rank deficient.
    fn fit(pts: &[(f64, f64)]) -> Option<Self> {
        let lo = pts.first()?.0;
        let hi = pts.last()?.0;
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        if h <= 0.0 {
            return None;
        }
        let n = pts.len();
        let mut a: Vec<[f64; 4]> = pts
            .iter()
            .map(|&(q, _)| {
                let t = (q - c) / h;
                [1.0, t, t * t, t * t * t]
            })
            .collect();
        let mut y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let mut diag = [0.0; 4];
        for k in 0..4 {
            let norm = (k..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
            if norm == 0.0 {
                return None;
            }
            let alpha = if a[k][k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
            v[0] -= alpha;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            if vv > 0.0 {
                for j in k..4 {
                    let s: f64 = (k..n).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vv;
                    (k..n).for_each(|i| a[i][j] -= s * v[i - k]);
                }
                let s: f64 = (k..n).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vv;
                (k..n).for_each(|i| y[i] -= s * v[i - k]);
            }
            diag[k] = a[k][k];
        }
        let big = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let small = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
        if small < MIN_PIVOT_RATIO * big {
            return None;
        }
        let mut coef = [0.0; 4];
        for k in (0..4).rev() {
            let s: f64 = (k + 1..4).map(|j| a[k][j] * coef[j]).sum();
            coef[k] = (y[k] - s) / a[k][k];
        }
        Some(Self { c, h, a: coef })
    }

    /// Exact `∫ p(q) dq` over `[lo, hi]`.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let anti = |q: f64| {
            let t = (q - self.c) / self.h;
            self.h * (self.a[0] * t + self.a[1] * t * t / 2.0 + self.a[2] * t.powi(3) / 3.0 + self.a[3] * t.powi(4) / 4.0)
        };
        anti(hi) - anti(lo)
    }
}

/// Fritsch–Carlson monotone cubic Hermite interpolant.
#[derive(Clone, Debug)]
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

impl Pchip {
    fn new(pts: &[(f64, f64)]) -> Result<Self> {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Metric("interpolation needs distinct quality values".into()));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            if del[k - 1] * del[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], del[0], del[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        Ok(Self { x, y, d })
    }

    fn eval(&self, q: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= q) {
            0 => 0,
            i => (i - 1).min(n - 2),
        };
        let h = self.x[k + 1] - self.x[k];
        let t = (q - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.d[k + 1]
    }

    /// Simpson's rule on every knot interval inside `[lo, hi]`; exact for
    /// the piecewise cubic.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let mut cuts = vec![lo];
        cuts.extend(self.x.iter().copied().filter(|&v| v > lo && v < hi));
        cuts.push(hi);
        cuts.windows(2)
            .map(|w| (w[1] - w[0]) / 6.0 * (self.eval(w[0]) + 4.0 * self.eval(0.5 * (w[0] + w[1])) + self.eval(w[1])))
            .sum()
    }
}

/// BD-rate of `test` against `anchor`, each a list of `(rate, quality)`
/// with at least four points and strictly increasing rate.
pub fn bd_rate(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> Result<f64> {
    Ok(bd_rate_detailed(anchor, test)?.percent)
}

pub fn bd_rate_detailed(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> Result<BdOutcome> {
    let a = prepare(anchor, "anchor")?;
    let t = prepare(test, "test")?;
    let lo = a[0].0.max(t[0].0);
    let hi = a[a.len() - 1].0.min(t[t.len() - 1].0);
    if hi <= lo {
        return Err(Error::Metric(format!("quality ranges do not overlap ({lo:.4} >= {hi:.4})")));
    }
    let (ia, it, method) = match (CubicFit::fit(&a), CubicFit::fit(&t)) {
        (Some(fa), Some(ft)) => (fa.integral(lo, hi), ft.integral(lo, hi), BdMethod::Cubic),
        _ => {
            log::warn!("cubic BD fit is ill-conditioned, using piecewise cubic Hermite interpolation");
            (Pchip::new(&a)?.integral(lo, hi), Pchip::new(&t)?.integral(lo, hi), BdMethod::Pchip)
        }
    };
    let avg = (it - ia) / (hi - lo);
    Ok(BdOutcome { percent: (10f64.powf(avg) - 1.0) * 100.0, method })
}
