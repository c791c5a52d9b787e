//! Sparse voxel tensors, sparse convolutions and the autodiff tape.

mod coords;
pub mod gradcheck;
mod graph;
mod kernel;
pub mod layers;
mod matrix;
mod params;

use std::sync::Arc;

pub use coords::{child_of, CoordSet};
pub use gradcheck::grad_check;
pub use graph::{GradMode, Gradients, Graph, NodeId};
pub use kernel::{cube3_offset, Kernel, KernelMap, MapEntry, CUBE3_CENTER};
pub use layers::{irn_block, prune_topk, topk_indices, SparseVar};
pub use matrix::Matrix;
pub use params::{ParamStore, ParamTensor};

pub(crate) use graph::bce_term;

use crate::error::{Error, Result};

/// Coordinates at a given stride with one feature row per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseTensor {
    pub coords: Arc<CoordSet>,
    pub feats: Matrix,
}

impl SparseTensor {
    pub fn new(coords: CoordSet, feats: Matrix) -> Result<Self> {
        if coords.len() != feats.rows {
            return Err(Error::Shape(format!("{} coordinates but {} feature rows", coords.len(), feats.rows)));
        }
        Ok(Self { coords: Arc::new(coords), feats })
    }

    pub fn stride(&self) -> i32 {
        self.coords.stride()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.feats.cols
    }
}

/// Explicit convolution parameters for the standalone operators.
///
/// `weight` is laid out `[tap][c_in][c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub transposed: bool,
}

impl ConvParams {
    pub fn kernel(&self) -> Result<Kernel> {
        match (self.kernel_size, self.stride, self.transposed) {
            (1, 1, false) => Ok(Kernel::Point),
            (3, 1, false) => Ok(Kernel::Cube3),
            (2, 2, false) => Ok(Kernel::Down2),
            (2, 2, true) => Ok(Kernel::Up2),
            (k, s, t) => Err(Error::Config(format!("unsupported convolution: kernel {k}, stride {s}, transposed {t}"))),
        }
    }

    pub fn zeros(kernel: Kernel, c_in: usize, c_out: usize) -> Self {
        let (kernel_size, stride, transposed) = match kernel {
            Kernel::Point => (1, 1, false),
            Kernel::Cube3 => (3, 1, false),
            Kernel::Down2 => (2, 2, false),
            Kernel::Up2 => (2, 2, true),
        };
        Self {
            weight: vec![0.0; kernel.volume() * c_in * c_out],
            bias: vec![0.0; c_out],
            c_in,
            c_out,
            kernel_size,
            stride,
            transposed,
        }
    }

    fn store(&self, kernel: Kernel) -> Result<ParamStore> {
        if self.weight.len() != kernel.volume() * self.c_in * self.c_out || self.bias.len() != self.c_out {
            return Err(Error::Shape("convolution parameter sizes inconsistent".into()));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite convolution parameter".into()));
        }
        let mut s = ParamStore::new();
        s.insert("conv.weight", ParamTensor { shape: vec![kernel.volume(), self.c_in, self.c_out], data: self.weight.clone() });
        s.insert("conv.bias", ParamTensor { shape: vec![self.c_out], data: self.bias.clone() });
        Ok(s)
    }
}

fn run_conv(x: &SparseTensor, p: &ConvParams, kernel: Kernel) -> Result<SparseTensor> {
    if x.channels() != p.c_in {
        return Err(Error::Shape(format!("input has {} channels, kernel expects {}", x.channels(), p.c_in)));
    }
    let store = p.store(kernel)?;
    let mut g = Graph::new(GradMode::Off);
    let v = g.input(x);
    let y = layers::conv(&mut g, &store, "conv", kernel, &v)?;
    Ok(y.to_tensor(&g))
}

/// Stride-1 (3×3×3 or 1×1×1) or stride-2 (2×2×2) sparse convolution.
pub fn sparse_conv(x: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    let kernel = p.kernel()?;
    if kernel == Kernel::Up2 {
        return Err(Error::Config("transposed parameters passed to sparse_conv".into()));
    }
    run_conv(x, p, kernel)
}

/// Generative 2×2×2 transposed convolution: every input voxel emits all
/// eight children at half the stride.
pub fn generative_upconv(x: &SparseTensor, p: &ConvParams) -> Result<SparseTensor> {
    if p.kernel()? != Kernel::Up2 {
        return Err(Error::Config("generative_upconv requires K=2, s=2, transposed".into()));
    }
    run_conv(x, p, Kernel::Up2)
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &SparseTensor) -> SparseTensor {
    let mut y = x.clone();
    y.feats.data.iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

pub fn add(a: &SparseTensor, b: &SparseTensor) -> Result<SparseTensor> {
    if a.coords != b.coords && *a.coords != *b.coords {
        return Err(Error::Shape("add: coordinate sets differ".into()));
    }
    if a.channels() != b.channels() {
        return Err(Error::Shape("add: channel counts differ".into()));
    }
    let mut y = a.clone();
    y.feats.add_assign(&b.feats);
    Ok(y)
}

pub fn concat(a: &SparseTensor, b: &SparseTensor) -> Result<SparseTensor> {
    if *a.coords != *b.coords {
        return Err(Error::Shape("concat: coordinate sets differ".into()));
    }
    let cols = a.channels() + b.channels();
    let mut feats = Matrix::zeros(a.len(), cols);
    for i in 0..a.len() {
        let r = feats.row_mut(i);
        r[..a.channels()].copy_from_slice(a.feats.row(i));
        r[a.channels()..].copy_from_slice(b.feats.row(i));
    }
    Ok(SparseTensor { coords: a.coords.clone(), feats })
}

pub fn scale(x: &SparseTensor, s: f64) -> SparseTensor {
    let mut y = x.clone();
    y.feats.data.iter_mut().for_each(|v| *v *= s);
    y
}

/// Standalone top-k pruning of a materialized tensor.
pub fn prune_topk_tensor(x: &SparseTensor, logits: &[f64], k: usize) -> Result<SparseTensor> {
    let mut g = Graph::new(GradMode::Off);
    let v = g.input(x);
    let (y, _) = layers::prune_topk(&mut g, &v, logits, k)?;
    Ok(y.to_tensor(&g))
}

#[cfg(test)]
mod tests;
