//! Network graphs recorded on a [`Graph`] tape.
//!
//! The same functions serve training (with gradients) and inference
//! (`GradMode::Off`), so the decoder a model is trained with is exactly
//! the decoder used on bitstreams.

use std::sync::Arc;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::sparse::layers::{conv, conv_relu, irn_block, prune_to, tensor_from_unsorted};
use crate::sparse::{topk_indices, CoordSet, Graph, Kernel, Matrix, NodeId, ParamStore, SparseTensor, SparseVar};

/// Encoder output: the stride-8 latent and the coordinate pyramid it was
/// computed on.
#[derive(Clone, Debug)]
pub struct Analysis {
    /// Unquantized latent features `F_z`.
    pub latent: SparseVar,
    /// Input coordinates at strides 1, 2, 4 and 8.
    pub pyramid: [Arc<CoordSet>; 4],
}

impl Analysis {
    /// Point counts at strides 4, 2 and 1, the order the decoder consumes them.
    pub fn counts(&self) -> [usize; 3] {
        [self.pyramid[2].len(), self.pyramid[1].len(), self.pyramid[0].len()]
    }
}

/// Stride-1 tensor with RGB features shifted to be centered on zero.
pub fn color_tensor(pc: &PointCloud) -> Result<SparseTensor> {
    if pc.is_empty() {
        return Err(Error::Empty("cannot encode an empty point cloud".into()));
    }
    let feats = pc.colors.iter().map(|c| c.iter().map(|v| v - 0.5).collect()).collect();
    tensor_from_unsorted(pc.coords.clone(), feats, 1)
}

/// Stride-1 tensor with a constant occupancy feature.
pub fn occupancy_tensor(pc: &PointCloud) -> Result<SparseTensor> {
    if pc.is_empty() {
        return Err(Error::Empty("cannot encode an empty point cloud".into()));
    }
    tensor_from_unsorted(pc.coords.clone(), vec![vec![1.0]; pc.len()], 1)
}

/// Three `[conv3 + ReLU, IRN, down2 + ReLU]` stages and a pointwise output
/// layer under `prefix`.
pub fn analysis(g: &mut Graph, store: &ParamStore, prefix: &str, input: &SparseTensor) -> Result<Analysis> {
    let mut x = g.input(input);
    let s1 = x.coords.clone();
    let mut pyramid = vec![s1];
    for i in 0..3 {
        x = conv_relu(g, store, &format!("{prefix}.s{i}.conv"), Kernel::Cube3, &x)?;
        x = irn_block(g, store, &format!("{prefix}.s{i}.irn"), &x)?;
        x = conv_relu(g, store, &format!("{prefix}.s{i}.down"), Kernel::Down2, &x)?;
        pyramid.push(x.coords.clone());
    }
    let latent = conv(g, store, &format!("{prefix}.out"), Kernel::Point, &x)?;
    let pyramid: [Arc<CoordSet>; 4] = pyramid.try_into().expect("four scales");
    Ok(Analysis { latent, pyramid })
}

/// Pointwise 8→32 with ReLU, then a 3×3×3 convolution; coordinates unchanged.
pub fn transform_module(g: &mut Graph, store: &ParamStore, z: &SparseVar) -> Result<SparseVar> {
    let h = conv_relu(g, store, "transform.fc", Kernel::Point, z)?;
    conv(g, store, "transform.conv", Kernel::Cube3, &h)
}

/// One upsampling scale of the geometry decoder.
#[derive(Clone, Debug)]
pub struct GeoScale {
    pub candidates: Arc<CoordSet>,
    /// Occupancy logits, one row per candidate.
    pub logits: NodeId,
    pub kept: Arc<CoordSet>,
}

#[derive(Clone, Debug)]
pub struct GeoOutput {
    /// Scales at strides 4, 2 and 1.
    pub scales: Vec<GeoScale>,
}

impl GeoOutput {
    pub fn coords(&self) -> &Arc<CoordSet> {
        &self.scales.last().expect("three scales").kept
    }
}

/// Three `[generative up2 + ReLU, IRN, pointwise logit head, top-k]`
/// scales under `prefix`.
///
/// `guide` holds ground-truth coordinates at strides 4 and 2; when given,
/// true voxels are kept at those scales in addition to the top-k, so
/// later scales see correct parents while the classifier is still poor.
/// The final scale is always plain top-k.
pub fn geometry_decoder(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    feats: &SparseVar,
    k: [usize; 3],
    guide: Option<[&CoordSet; 2]>,
) -> Result<GeoOutput> {
    if feats.stride() != 8 {
        return Err(Error::Shape(format!("geometry decoder expects a stride-8 input, got {}", feats.stride())));
    }
    let mut x = feats.clone();
    let mut scales = Vec::with_capacity(3);
    for (i, &ki) in k.iter().enumerate() {
        let up = conv_relu(g, store, &format!("{prefix}.s{i}.up"), Kernel::Up2, &x)?;
        let h = irn_block(g, store, &format!("{prefix}.s{i}.irn"), &up)?;
        let logit_var = conv(g, store, &format!("{prefix}.s{i}.head"), Kernel::Point, &h)?;
        let logits = g.value(logit_var.node).data.clone();
        if ki > logits.len() {
            log::warn!("scale {i}: k = {ki} exceeds {} candidates, keeping all", logits.len());
        }
        let mut kept = topk_indices(&logits, ki);
        if let (Some(gd), true) = (guide, i < 2) {
            let mut mark = vec![false; logits.len()];
            kept.iter().for_each(|&j| mark[j] = true);
            for (j, c) in h.coords.coords().iter().enumerate() {
                if gd[i].contains(c) {
                    mark[j] = true;
                }
            }
            kept = (0..logits.len()).filter(|&j| mark[j]).collect();
        }
        let kept_set = Arc::new(h.coords.select(&kept));
        let node = g.gather(h.node, kept.iter().map(|&j| j as u32).collect());
        scales.push(GeoScale { candidates: h.coords.clone(), logits: logit_var.node, kept: kept_set.clone() });
        x = SparseVar { node, coords: kept_set };
    }
    Ok(GeoOutput { scales })
}

/// Labels for the candidates of one scale: 1 where the voxel is occupied.
pub fn occupancy_labels(candidates: &CoordSet, truth: &CoordSet) -> Vec<f64> {
    candidates.coords().iter().map(|c| if truth.contains(c) { 1.0 } else { 0.0 }).collect()
}

#[derive(Clone, Debug)]
pub struct AttrOutput {
    /// Stride-1 RGB in `[0, 1]`, one row per target coordinate.
    pub colors: NodeId,
    pub coords: Arc<CoordSet>,
    /// Intermediate RGB reconstructions at strides 4 and 2.
    pub aux: [SparseVar; 2],
}

/// Upsamples the latent onto a known coordinate pyramid: three
/// `[generative up2 + ReLU, keep target voxels, IRN]` scales, pointwise
/// color heads at strides 4 and 2, and a clamped output head.
pub fn attribute_decoder(g: &mut Graph, store: &ParamStore, z: &SparseVar, target: &Arc<CoordSet>) -> Result<AttrOutput> {
    if target.is_empty() || target.stride() != 1 {
        return Err(Error::Shape("attribute decoder needs a non-empty stride-1 target".into()));
    }
    let t2 = Arc::new(target.parents());
    let t4 = Arc::new(t2.parents());
    let targets = [t4, t2, target.clone()];
    let mut x = z.clone();
    let mut aux = Vec::with_capacity(2);
    for (i, t) in targets.iter().enumerate() {
        let up = conv_relu(g, store, &format!("attr_decoder.s{i}.up"), Kernel::Up2, &x)?;
        let kept = prune_to(g, &up, t)?;
        x = irn_block(g, store, &format!("attr_decoder.s{i}.irn"), &kept)?;
        if i < 2 {
            aux.push(conv(g, store, &format!("attr_decoder.aux{i}"), Kernel::Point, &x)?);
        }
    }
    let out = conv(g, store, "attr_decoder.head", Kernel::Point, &x)?;
    let colors = g.clamp(out.node, 0.0, 1.0);
    let aux: [SparseVar; 2] = aux.try_into().expect("two auxiliary heads");
    Ok(AttrOutput { colors, coords: target.clone(), aux })
}

/// Rows of a finished tape node as RGB triples.
pub fn rgb_rows(m: &Matrix) -> Vec<[f64; 3]> {
    m.data.chunks_exact(3).map(|r| [r[0], r[1], r[2]]).collect()
}
