use rand::Rng;

use super::entropy::QMAX;
use crate::sparse::{Graph, Matrix, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive uniform noise in `(-½, ½)`; training only.
    Noise,
    /// Nearest integer, ties to even, clamped to `[-QMAX, QMAX]`.
    Round,
}

pub fn quantize_round(v: f64) -> f64 {
    v.round_ties_even().clamp(-QMAX as f64, QMAX as f64)
}

pub fn quantize_matrix<R: Rng>(m: &Matrix, mode: QuantMode, rng: &mut R) -> Matrix {
    let mut out = m.clone();
    match mode {
        QuantMode::Round => out.data.iter_mut().for_each(|v| *v = quantize_round(*v)),
        QuantMode::Noise => out.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5)),
    }
    out
}

/// Noisy proxy of `x` on the tape; the gradient passes through unchanged.
pub fn add_noise<R: Rng>(g: &mut Graph, x: NodeId, rng: &mut R) -> NodeId {
    let v = g.value(x);
    let noise = Matrix::from_vec(v.rows, v.cols, (0..v.data.len()).map(|_| rng.gen_range(-0.5..0.5)).collect());
    let n = g.constant(noise);
    g.add(x, n).expect("same shape")
}
