//! Stage losses recorded on a tape.
//!
//! Rates are in bits per input point; color distortions are YUV MSEs on
//! the 0–255 scale; occupancy losses are mean BCE in nats.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::config::LossWeights;
use crate::cloud::{pool_colors, Coord, NnIndex, PointCloud, Rgb, RGB_TO_YUV};
use crate::codec::network::{
    analysis, attribute_decoder, color_tensor, geometry_decoder, occupancy_labels, occupancy_tensor, transform_module,
    GeoOutput,
};
use crate::codec::{add_noise, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::sparse::{bce_term, CoordSet, GradMode, Graph, Matrix, NodeId, ParamStore, SparseTensor, SparseVar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossParts {
    /// Total bits of the noisy latent.
    pub rate_bits: f64,
    /// `rate_bits` per input point.
    pub rate: f64,
    /// Final-scale color distortion (the bidirectional maximum in stage 3).
    pub d_attr: f64,
    /// Sum of the auxiliary-scale color distortions.
    pub d_multi: f64,
    /// Occupancy BCE at stride 1.
    pub bce: f64,
    /// Occupancy BCE summed over strides 4 and 2.
    pub bce2: f64,
    /// Mean squared student/teacher feature difference.
    pub kd: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Attribute,
    Geometry,
    Joint,
    Teacher,
}

impl LossParts {
    /// The total rebuilt from the parts with plain arithmetic.
    pub fn recompose(&self, kind: LossKind, w: &LossWeights) -> f64 {
        let attr = w.lambda_a * (w.alpha * self.d_attr + self.d_multi);
        let geo = w.lambda_g * (self.bce + self.bce2);
        match kind {
            LossKind::Attribute => self.rate + attr,
            LossKind::Geometry => self.rate + geo + w.lambda_mse * self.kd,
            LossKind::Joint => self.rate + w.lambda_t * (attr + geo),
            LossKind::Teacher => self.rate + geo,
        }
    }

    pub(crate) fn accumulate(&mut self, o: &LossParts, s: f64) {
        self.rate_bits += s * o.rate_bits;
        self.rate += s * o.rate;
        self.d_attr += s * o.d_attr;
        self.d_multi += s * o.d_multi;
        self.bce += s * o.bce;
        self.bce2 += s * o.bce2;
        self.kd += s * o.kd;
        self.total += s * o.total;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossOutput {
    pub loss: NodeId,
    pub parts: LossParts,
}

/// Mean BCE of occupancy logits against membership of each candidate in
/// `truth`, in nats.
pub fn bce_occupancy(logits: &[f64], candidates: &CoordSet, truth: &CoordSet) -> Result<f64> {
    if logits.len() != candidates.len() {
        return Err(Error::Shape(format!("{} logits for {} candidates", logits.len(), candidates.len())));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let labels = occupancy_labels(candidates, truth);
    Ok(logits.iter().zip(&labels).map(|(&l, &y)| bce_term(l, y)).sum::<f64>() / logits.len() as f64)
}

fn yuv255(g: &mut Graph, x: NodeId) -> Result<NodeId> {
    g.row_transform(x, RGB_TO_YUV, 255.0)
}

fn color_matrix(colors: &[Rgb]) -> Matrix {
    Matrix::from_vec(colors.len(), 3, colors.iter().flatten().copied().collect())
}

/// Colors reordered to the rows of `set`; every coordinate must be present.
fn aligned_colors(set: &CoordSet, coords: &[Coord], colors: &[Rgb]) -> Result<Matrix> {
    let mut m = Matrix::zeros(set.len(), 3);
    let mut seen = 0;
    for (c, rgb) in coords.iter().zip(colors) {
        let i = set.find(c).ok_or_else(|| Error::Shape(format!("coordinate {c:?} missing from target set")))?;
        m.row_mut(i).copy_from_slice(rgb);
        seen += 1;
    }
    if seen != set.len() {
        return Err(Error::Shape(format!("{seen} colors for {} coordinates", set.len())));
    }
    Ok(m)
}

fn mse_yuv(g: &mut Graph, rec: NodeId, truth: Matrix) -> Result<NodeId> {
    let a = yuv255(g, rec)?;
    let t = g.constant(truth);
    let b = yuv255(g, t)?;
    g.mean_square(a, b)
}

/// Bidirectional nearest-neighbor YUV MSE between a reconstruction on
/// `rec_coords` and reference colors; returns `(max, forward, backward)`.
pub fn bidirectional_mse(
    g: &mut Graph,
    rec: NodeId,
    rec_coords: &[Coord],
    ref_coords: &[Coord],
    ref_colors: &[Rgb],
) -> Result<(NodeId, NodeId, NodeId)> {
    let rec_nn = NnIndex::new(rec_coords)?;
    let ref_nn = NnIndex::new(ref_coords)?;
    let a = yuv255(g, rec)?;
    let t = g.constant(color_matrix(ref_colors));
    let b = yuv255(g, t)?;
    let fwd: Vec<(u32, u32)> = ref_coords.iter().enumerate().map(|(i, &c)| (rec_nn.nearest(c).0 as u32, i as u32)).collect();
    let bwd: Vec<(u32, u32)> = rec_coords.iter().enumerate().map(|(j, &c)| (j as u32, ref_nn.nearest(c).0 as u32)).collect();
    let f = g.matched_mse(a, b, fwd)?;
    let bk = g.matched_mse(a, b, bwd)?;
    Ok((g.max(f, bk), f, bk))
}

/// Adds uniform noise to the latent and records its rate under the
/// entropy model at `prefix`.
fn noisy_latent<R: Rng>(g: &mut Graph, store: &ParamStore, prefix: &str, z: &SparseVar, rng: &mut R) -> Result<(SparseVar, NodeId)> {
    let node = add_noise(g, z.node, rng);
    let mu = g.param(store, &format!("{prefix}.mu"))?;
    let log_b = g.param(store, &format!("{prefix}.log_b"))?;
    let bits = g.laplace_rate(node, mu, log_b)?;
    Ok((SparseVar { node, coords: z.coords.clone() }, bits))
}

struct GeoTerms {
    out: GeoOutput,
    bce: NodeId,
    bce2: NodeId,
}

fn geometry_terms(
    g: &mut Graph,
    store: &ParamStore,
    prefix: &str,
    feats: &SparseVar,
    pyramid: &[Arc<CoordSet>; 4],
    guide: bool,
) -> Result<GeoTerms> {
    let truth = [&pyramid[2], &pyramid[1], &pyramid[0]];
    let k = truth.map(|t| t.len());
    let gd = guide.then(|| [&*pyramid[2], &*pyramid[1]]);
    let out = geometry_decoder(g, store, prefix, feats, k, gd)?;
    let mut b = Vec::with_capacity(3);
    for (s, t) in out.scales.iter().zip(truth) {
        b.push(g.bce(s.logits, occupancy_labels(&s.candidates, t))?);
    }
    let bce2 = g.weighted_sum(&[(b[0], 1.0), (b[1], 1.0)]);
    Ok(GeoTerms { out, bce: b[2], bce2 })
}

fn check_kind(m: &ModelParams, kind: ModelKind) -> Result<()> {
    if m.kind != kind {
        return Err(Error::Config(format!("expected a {kind:?} model, got {:?}", m.kind)));
    }
    Ok(())
}

/// Stage 1: attribute coding on the true geometry.
///
/// `R + λ_A(α·MSE(x, x̂) + Σ_s MSE(pool_s(x), x̄_s))`.
pub fn loss_attribute<R: Rng>(g: &mut Graph, pc: &PointCloud, m: &ModelParams, w: &LossWeights, rng: &mut R) -> Result<LossOutput> {
    check_kind(m, ModelKind::Student)?;
    let store = &m.store;
    let a = analysis(g, store, "encoder", &color_tensor(pc)?)?;
    let (z, bits) = noisy_latent(g, store, "entropy", &a.latent, rng)?;
    let target = a.pyramid[0].clone();
    let out = attribute_decoder(g, store, &z, &target)?;
    let d = mse_yuv(g, out.colors, aligned_colors(&target, &pc.coords, &pc.colors)?)?;
    let mut multi = Vec::with_capacity(2);
    for (aux, s) in out.aux.iter().zip([4, 2]) {
        let (pc_s, col_s) = pool_colors(&pc.coords, &pc.colors, s);
        let gt = aligned_colors(&aux.coords, &pc_s, &col_s)?;
        multi.push(mse_yuv(g, aux.node, gt)?);
    }
    let d_multi = g.weighted_sum(&[(multi[0], 1.0), (multi[1], 1.0)]);
    let n = pc.len() as f64;
    let loss = g.weighted_sum(&[(bits, 1.0 / n), (d, w.lambda_a * w.alpha), (d_multi, w.lambda_a)]);
    let parts = LossParts {
        rate_bits: g.scalar(bits),
        rate: g.scalar(bits) / n,
        d_attr: g.scalar(d),
        d_multi: g.scalar(d_multi),
        total: g.scalar(loss),
        ..Default::default()
    };
    Ok(LossOutput { loss, parts })
}

/// Teacher latent `F_T` for `pc`, computed without gradients.
pub fn teacher_features(pc: &PointCloud, teacher: &ModelParams) -> Result<SparseTensor> {
    check_kind(teacher, ModelKind::Teacher)?;
    let mut g = Graph::new(GradMode::Off);
    let a = analysis(&mut g, &teacher.store, "teacher.encoder", &occupancy_tensor(pc)?)?;
    Ok(a.latent.to_tensor(&g))
}

/// Stage 2: geometry decoding from the shared latent.
///
/// `R + λ_G(L_BCE + L_BCE2) + λ_MSE·mean((F_S − F_T)²)`; the KD term is
/// present only when a teacher is given.
pub fn loss_geometry<R: Rng>(
    g: &mut Graph,
    pc: &PointCloud,
    m: &ModelParams,
    teacher: Option<&ModelParams>,
    w: &LossWeights,
    guide: bool,
    rng: &mut R,
) -> Result<LossOutput> {
    check_kind(m, ModelKind::Student)?;
    let store = &m.store;
    let a = analysis(g, store, "encoder", &color_tensor(pc)?)?;
    let (z, bits) = noisy_latent(g, store, "entropy", &a.latent, rng)?;
    let feats = if m.arch.transform { transform_module(g, store, &z)? } else { z };
    let geo = geometry_terms(g, store, "geo_decoder", &feats, &a.pyramid, guide)?;
    let n = pc.len() as f64;
    let mut terms = vec![(bits, 1.0 / n), (geo.bce, w.lambda_g), (geo.bce2, w.lambda_g)];
    let mut kd_val = 0.0;
    if let Some(t) = teacher {
        if !m.arch.transform {
            return Err(Error::Config("knowledge distillation needs the transform module".into()));
        }
        let ft = teacher_features(pc, t)?;
        if ft.coords.coords() != feats.coords.coords() {
            return Err(Error::Shape("teacher and student latent coordinates differ".into()));
        }
        let c = g.constant(ft.feats);
        let kd = g.mean_square(feats.node, c)?;
        kd_val = g.scalar(kd);
        terms.push((kd, w.lambda_mse));
    }
    let loss = g.weighted_sum(&terms);
    let parts = LossParts {
        rate_bits: g.scalar(bits),
        rate: g.scalar(bits) / n,
        bce: g.scalar(geo.bce),
        bce2: g.scalar(geo.bce2),
        kd: kd_val,
        total: g.scalar(loss),
        ..Default::default()
    };
    Ok(LossOutput { loss, parts })
}

/// Stage 3: both decoders, colors predicted on the decoded geometry.
///
/// `R + λ_t[λ_A(α·D_A + D_multi) + λ_G(L_BCE + L_BCE2)]` with
/// `D_A = max(forward, backward)` nearest-neighbor MSE.
pub fn loss_joint<R: Rng>(
    g: &mut Graph,
    pc: &PointCloud,
    m: &ModelParams,
    w: &LossWeights,
    guide: bool,
    rng: &mut R,
) -> Result<LossOutput> {
    check_kind(m, ModelKind::Student)?;
    let store = &m.store;
    let a = analysis(g, store, "encoder", &color_tensor(pc)?)?;
    let (z, bits) = noisy_latent(g, store, "entropy", &a.latent, rng)?;
    let feats = if m.arch.transform { transform_module(g, store, &z)? } else { z.clone() };
    let geo = geometry_terms(g, store, "geo_decoder", &feats, &a.pyramid, guide)?;
    let decoded = geo.out.coords().clone();
    if decoded.is_empty() {
        return Err(Error::Decode("decoded geometry is empty".into()));
    }
    let attr = attribute_decoder(g, store, &z, &decoded)?;
    let (d_a, _, _) = bidirectional_mse(g, attr.colors, decoded.coords(), &pc.coords, &pc.colors)?;
    let mut multi = Vec::with_capacity(2);
    for (aux, s) in attr.aux.iter().zip([4, 2]) {
        let (pc_s, col_s) = pool_colors(&pc.coords, &pc.colors, s);
        multi.push(bidirectional_mse(g, aux.node, aux.coords.coords(), &pc_s, &col_s)?.0);
    }
    let d_multi = g.weighted_sum(&[(multi[0], 1.0), (multi[1], 1.0)]);
    let n = pc.len() as f64;
    let (la, lg, lt) = (w.lambda_a, w.lambda_g, w.lambda_t);
    let loss = g.weighted_sum(&[
        (bits, 1.0 / n),
        (d_a, lt * la * w.alpha),
        (d_multi, lt * la),
        (geo.bce, lt * lg),
        (geo.bce2, lt * lg),
    ]);
    let parts = LossParts {
        rate_bits: g.scalar(bits),
        rate: g.scalar(bits) / n,
        d_attr: g.scalar(d_a),
        d_multi: g.scalar(d_multi),
        bce: g.scalar(geo.bce),
        bce2: g.scalar(geo.bce2),
        total: g.scalar(loss),
        ..Default::default()
    };
    Ok(LossOutput { loss, parts })
}

/// Geometry-only teacher: `R + λ_G(L_BCE + L_BCE2)` on occupancy input.
pub fn loss_teacher<R: Rng>(
    g: &mut Graph,
    pc: &PointCloud,
    t: &ModelParams,
    w: &LossWeights,
    guide: bool,
    rng: &mut R,
) -> Result<LossOutput> {
    check_kind(t, ModelKind::Teacher)?;
    let store = &t.store;
    let a = analysis(g, store, "teacher.encoder", &occupancy_tensor(pc)?)?;
    let (z, bits) = noisy_latent(g, store, "teacher.entropy", &a.latent, rng)?;
    let geo = geometry_terms(g, store, "teacher.geo_decoder", &z, &a.pyramid, guide)?;
    let n = pc.len() as f64;
    let loss = g.weighted_sum(&[(bits, 1.0 / n), (geo.bce, w.lambda_g), (geo.bce2, w.lambda_g)]);
    let parts = LossParts {
        rate_bits: g.scalar(bits),
        rate: g.scalar(bits) / n,
        bce: g.scalar(geo.bce),
        bce2: g.scalar(geo.bce2),
        total: g.scalar(loss),
        ..Default::default()
    };
    Ok(LossOutput { loss, parts })
}

/// Teacher geometry reconstruction with the true per-scale counts.
pub fn teacher_reconstruct(pc: &PointCloud, t: &ModelParams) -> Result<Arc<CoordSet>> {
    check_kind(t, ModelKind::Teacher)?;
    let mut g = Graph::new(GradMode::Off);
    let a = analysis(&mut g, &t.store, "teacher.encoder", &occupancy_tensor(pc)?)?;
    let mut z = a.latent.clone();
    let mut q = g.value(z.node).clone();
    q.data.iter_mut().for_each(|v| *v = crate::codec::quantize_round(*v));
    z.node = g.constant(q);
    let out = geometry_decoder(&mut g, &t.store, "teacher.geo_decoder", &z, a.counts(), None)?;
    Ok(out.coords().clone())
}
