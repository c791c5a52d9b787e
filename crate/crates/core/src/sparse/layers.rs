//! Network building blocks over coordinate-carrying tape nodes.

use std::sync::Arc;

use super::coords::CoordSet;
use super::graph::{Graph, NodeId};
use super::kernel::Kernel;
use super::matrix::Matrix;
use super::params::ParamStore;
use super::SparseTensor;
use crate::cloud::morton;
use crate::error::{Error, Result};

/// A tape node whose rows are indexed by a coordinate set.
#[derive(Clone, Debug)]
pub struct SparseVar {
    pub node: NodeId,
    pub coords: Arc<CoordSet>,
}

impl SparseVar {
    pub fn stride(&self) -> i32 {
        self.coords.stride()
    }

    pub fn channels(&self, g: &Graph) -> usize {
        g.value(self.node).cols
    }

    pub fn to_tensor(&self, g: &Graph) -> SparseTensor {
        SparseTensor { coords: self.coords.clone(), feats: g.value(self.node).clone() }
    }
}

impl Graph {
    pub fn input(&mut self, t: &SparseTensor) -> SparseVar {
        let node = self.constant(t.feats.clone());
        SparseVar { node, coords: t.coords.clone() }
    }
}

/// Applies `{name}.weight`/`{name}.bias` with the given kernel geometry.
pub fn conv(g: &mut Graph, store: &ParamStore, name: &str, kernel: Kernel, x: &SparseVar) -> Result<SparseVar> {
    let w = g.param(store, &format!("{name}.weight"))?;
    let b = g.param(store, &format!("{name}.bias"))?;
    let shape = &store.get(&format!("{name}.weight"))?.shape;
    if shape[0] != kernel.volume() {
        return Err(Error::Shape(format!("'{name}' has kernel volume {}, expected {}", shape[0], kernel.volume())));
    }
    if shape[1] != x.channels(g) {
        return Err(Error::Shape(format!("'{name}' expects {} input channels, got {}", shape[1], x.channels(g))));
    }
    match kernel {
        Kernel::Point => {
            let node = g.linear(x.node, w, b)?;
            Ok(SparseVar { node, coords: x.coords.clone() })
        }
        Kernel::Cube3 => {
            let map = g.kernel_map(kernel, &x.coords, &x.coords)?;
            let node = g.conv(x.node, w, b, map)?;
            Ok(SparseVar { node, coords: x.coords.clone() })
        }
        Kernel::Down2 => {
            let out = Arc::new(x.coords.parents());
            let map = g.kernel_map(kernel, &x.coords, &out)?;
            let node = g.conv(x.node, w, b, map)?;
            Ok(SparseVar { node, coords: out })
        }
        Kernel::Up2 => {
            let out = Arc::new(x.coords.children()?);
            let map = g.kernel_map(kernel, &x.coords, &out)?;
            let node = g.conv(x.node, w, b, map)?;
            Ok(SparseVar { node, coords: out })
        }
    }
}

pub fn relu(g: &mut Graph, x: &SparseVar) -> SparseVar {
    SparseVar { node: g.relu(x.node), coords: x.coords.clone() }
}

pub fn conv_relu(g: &mut Graph, store: &ParamStore, name: &str, kernel: Kernel, x: &SparseVar) -> Result<SparseVar> {
    let y = conv(g, store, name, kernel, x)?;
    Ok(relu(g, &y))
}

/// Coordinate-aligned sum; coordinates must match exactly.
pub fn add(g: &mut Graph, a: &SparseVar, b: &SparseVar) -> Result<SparseVar> {
    if *a.coords != *b.coords {
        return Err(Error::Shape("add: coordinate sets differ".into()));
    }
    Ok(SparseVar { node: g.add(a.node, b.node)?, coords: a.coords.clone() })
}

pub fn concat(g: &mut Graph, parts: &[&SparseVar]) -> Result<SparseVar> {
    if parts.iter().any(|p| *p.coords != *parts[0].coords) {
        return Err(Error::Shape("concat: coordinate sets differ".into()));
    }
    let ids: Vec<NodeId> = parts.iter().map(|p| p.node).collect();
    Ok(SparseVar { node: g.concat(&ids)?, coords: parts[0].coords.clone() })
}

pub fn scale(g: &mut Graph, x: &SparseVar, s: f64) -> SparseVar {
    SparseVar { node: g.scale(x.node, s), coords: x.coords.clone() }
}

/// Parameter layout of an inception-residual block with `c` channels.
pub fn irn_layers(c: usize) -> [(&'static str, Kernel, usize, usize); 5] {
    let q = c / 4;
    [
        ("b0", Kernel::Cube3, c, q),
        ("b1", Kernel::Point, c, q),
        ("b2a", Kernel::Cube3, c, q),
        ("b2b", Kernel::Cube3, q, c / 2),
        ("proj", Kernel::Point, c, c),
    ]
}

pub fn add_irn_params<R: rand::Rng>(store: &mut ParamStore, name: &str, c: usize, rng: &mut R) -> Result<()> {
    if c % 4 != 0 || c == 0 {
        return Err(Error::Config(format!("IRN block '{name}' needs a channel count divisible by 4, got {c}")));
    }
    for (sub, k, cin, cout) in irn_layers(c) {
        store.add_conv(&format!("{name}.{sub}"), k, cin, cout, rng);
    }
    store.get_mut(&format!("{name}.proj.weight"))?.data.fill(0.0);
    Ok(())
}

/// Inception-residual block:
/// `y = x + proj(concat[relu(conv3 x), relu(conv1 x), relu(conv3 relu(conv3 x))])`.
///
/// Branch widths are C/4, C/4 and C/2; the projection is linear and no
/// activation follows the residual sum.
pub fn irn_block(g: &mut Graph, store: &ParamStore, name: &str, x: &SparseVar) -> Result<SparseVar> {
    let c = x.channels(g);
    if c % 4 != 0 {
        return Err(Error::Config(format!("IRN block '{name}' needs channels divisible by 4, got {c}")));
    }
    let b0 = conv_relu(g, store, &format!("{name}.b0"), Kernel::Cube3, x)?;
    let b1 = conv_relu(g, store, &format!("{name}.b1"), Kernel::Point, x)?;
    let b2 = conv_relu(g, store, &format!("{name}.b2a"), Kernel::Cube3, x)?;
    let b2 = conv_relu(g, store, &format!("{name}.b2b"), Kernel::Cube3, &b2)?;
    let cat = concat(g, &[&b0, &b1, &b2])?;
    let proj = conv(g, store, &format!("{name}.proj"), Kernel::Point, &cat)?;
    add(g, x, &proj)
}

/// Indices of the `min(k, n)` largest logits, ties to the lower index
/// (lower Morton code), returned in ascending order.
pub fn topk_indices(logits: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    if k < logits.len() {
        idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx.sort_unstable();
    }
    idx
}

/// Keeps the rows of the `k` highest logits; returns the kept indices too.
pub fn prune_topk(g: &mut Graph, x: &SparseVar, logits: &[f64], k: usize) -> Result<(SparseVar, Vec<usize>)> {
    if logits.len() != x.coords.len() {
        return Err(Error::Shape(format!("prune_topk: {} logits for {} coordinates", logits.len(), x.coords.len())));
    }
    let kept = topk_indices(logits, k);
    let coords = Arc::new(x.coords.select(&kept));
    let node = g.gather(x.node, kept.iter().map(|&i| i as u32).collect());
    Ok((SparseVar { node, coords }, kept))
}

/// Keeps exactly the rows whose coordinates are in `target`.
pub fn prune_to(g: &mut Graph, x: &SparseVar, target: &Arc<CoordSet>) -> Result<SparseVar> {
    if target.stride() != x.stride() {
        return Err(Error::Shape("prune_to: stride mismatch".into()));
    }
    let mut idx = Vec::with_capacity(target.len());
    for c in target.coords() {
        let i = x
            .coords
            .find(c)
            .ok_or_else(|| Error::Shape(format!("prune_to: target {c:?} has no candidate")))?;
        idx.push(i as u32);
    }
    let node = g.gather(x.node, idx);
    Ok(SparseVar { node, coords: target.clone() })
}

/// Canonical sparse tensor: coordinates plus one feature row per voxel.
pub fn tensor_from_unsorted(coords: Vec<[i32; 3]>, feats: Vec<Vec<f64>>, stride: i32) -> Result<SparseTensor> {
    if coords.len() != feats.len() {
        return Err(Error::Shape("coordinate/feature count mismatch".into()));
    }
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.sort_by_key(|&i| morton(coords[i]));
    let sorted: Vec<[i32; 3]> = idx.iter().map(|&i| coords[i]).collect();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Shape("duplicate coordinates".into()));
    }
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| feats[i].clone()).collect();
    let set = CoordSet::new(sorted, stride)?;
    Ok(SparseTensor { coords: Arc::new(set), feats: Matrix::from_rows(&rows) })
}
