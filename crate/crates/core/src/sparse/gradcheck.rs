//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{GradMode, Graph, NodeId};
use super::params::ParamStore;
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many entries per tensor (sampled by `seed`);
    /// `None` checks everything.
    pub max_per_tensor: Option<usize>,
    pub seed: u64,
    /// Restricts which parameters are checked and differentiated.
    pub mode: GradMode,
    /// Denominator floor as a fraction of the largest numeric gradient;
    /// entries smaller than that are effectively compared in absolute terms.
    pub rel_floor: f64,
    /// Skip entries whose one-sided differences disagree by more than this
    /// fraction, i.e. where a ReLU or selection boundary lies within `eps`.
    pub kink_tol: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-4, max_per_tensor: None, seed: 0, mode: GradMode::All, rel_floor: 0.0, kink_tol: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries left out because a non-smooth point was detected.
    pub kinks: usize,
    /// `(parameter, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients of the scalar built by `f` against central
/// differences; error is `|a − n| / max(|n|, rel_floor · max|n|, 1e-8)`.
pub fn grad_check<F>(store: &ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut g = Graph::new(opts.mode.clone());
    let loss = f(&mut g, store)?;
    let base = g.scalar(loss);
    let grads = g.backward(loss, store)?;

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(GradMode::Off);
        let id = f(&mut g, s)?;
        Ok(g.scalar(id))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    let mut work = store.clone();
    let mut entries = Vec::new();
    let names: Vec<String> = store.names().filter(|n| opts.mode.trains(n)).cloned().collect();
    for name in names {
        let n = store.get(&name)?.len();
        let picks: Vec<usize> = match opts.max_per_tensor {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in picks {
            let orig = store.get(&name)?.data[i];
            work.get_mut(&name)?.data[i] = orig + opts.eps;
            let up = eval(&work)?;
            work.get_mut(&name)?.data[i] = orig - opts.eps;
            let down = eval(&work)?;
            work.get_mut(&name)?.data[i] = orig;
            let numeric = (up - down) / (2.0 * opts.eps);
            if let Some(tol) = opts.kink_tol {
                let (fp, fm) = ((up - base) / opts.eps, (base - down) / opts.eps);
                if (fp - fm).abs() > tol * fp.abs().max(fm.abs()).max(1e-8) {
                    report.kinks += 1;
                    continue;
                }
            }
            entries.push((name.clone(), i, grads[&name][i], numeric));
        }
    }
    let scale = entries.iter().map(|e| e.3.abs()).fold(0.0, f64::max);
    let floor = (opts.rel_floor * scale).max(1e-8);
    for (name, i, analytic, numeric) in entries {
        let err = (analytic - numeric).abs() / numeric.abs().max(floor);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((name, i, analytic, numeric));
        }
    }
    Ok(report)
}
