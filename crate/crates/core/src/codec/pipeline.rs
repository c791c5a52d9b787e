//! Inference path: point cloud → bitstream → point cloud.

use std::sync::Arc;

use super::entropy::QMAX;
use super::model::{ModelKind, ModelParams};
use super::network::{analysis, attribute_decoder, color_tensor, geometry_decoder, rgb_rows, transform_module};
use super::quant::quantize_round;
use crate::bitstream::{octree_decode, octree_encode, range_decode, range_encode, Bitstream, Pmf16, FLAG_NO_TRANSFORM};
use crate::cloud::{PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::sparse::{CoordSet, GradMode, Graph, Matrix, SparseTensor};

/// Encoder-side latent: thumbnail coordinates (stride 8), real features,
/// their rounded values and the per-scale counts.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub coords: Arc<CoordSet>,
    pub feats: Matrix,
    pub quantized: Matrix,
    /// Point counts at strides 4, 2, 1.
    pub counts: [usize; 3],
}

impl LatentCode {
    pub fn quantized_tensor(&self) -> SparseTensor {
        SparseTensor { coords: self.coords.clone(), feats: self.quantized.clone() }
    }
}

fn require_student(m: &ModelParams) -> Result<()> {
    if m.kind != ModelKind::Student {
        return Err(Error::Config("a student model is required for coding".into()));
    }
    Ok(())
}

pub fn encode_analysis(pc: &PointCloud, m: &ModelParams) -> Result<LatentCode> {
    require_student(m)?;
    let input = color_tensor(pc)?;
    let mut g = Graph::new(GradMode::Off);
    let a = analysis(&mut g, &m.store, "encoder", &input)?;
    let feats = g.value(a.latent.node).clone();
    let mut quantized = feats.clone();
    quantized.data.iter_mut().for_each(|v| *v = quantize_round(*v));
    Ok(LatentCode { coords: a.latent.coords.clone(), feats, quantized, counts: a.counts() })
}

/// Stride-1 coordinates from a (quantized) latent and per-scale counts.
pub fn decode_geometry(latent: &SparseTensor, k: [usize; 3], m: &ModelParams) -> Result<Arc<CoordSet>> {
    require_student(m)?;
    let mut g = Graph::new(GradMode::Off);
    let z = g.input(latent);
    let feats = if m.arch.transform { transform_module(&mut g, &m.store, &z)? } else { z };
    let geo = geometry_decoder(&mut g, &m.store, "geo_decoder", &feats, k, None)?;
    Ok(geo.coords().clone())
}

/// Colors for the given stride-1 coordinates.
pub fn decode_attributes(latent: &SparseTensor, target: &Arc<CoordSet>, depth: u32, m: &ModelParams) -> Result<PointCloud> {
    require_student(m)?;
    let mut g = Graph::new(GradMode::Off);
    let z = g.input(latent);
    let out = attribute_decoder(&mut g, &m.store, &z, target)?;
    let colors: Vec<Rgb> = rgb_rows(g.value(out.colors));
    PointCloud::new(target.coords().to_vec(), colors, depth)
}

/// Both decoders on one latent: what the decoder will reproduce.
pub fn reconstruct(latent: &SparseTensor, k: [usize; 3], depth: u32, m: &ModelParams) -> Result<PointCloud> {
    let coords = decode_geometry(latent, k, m)?;
    if coords.is_empty() {
        return Err(Error::Decode("decoded geometry is empty".into()));
    }
    decode_attributes(latent, &coords, depth, m)
}

/// Sizes of the coded pieces of one cloud.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CodingReport {
    pub points: usize,
    pub total_bytes: usize,
    pub octree_bits: usize,
    pub feature_bits: usize,
    /// Σ −log2 p of the quantized latent under the entropy model.
    pub estimated_feature_bits: f64,
    pub bpp: f64,
}

fn symbols(q: &Matrix) -> Vec<usize> {
    q.data.iter().map(|&v| (v as i32 + QMAX) as usize).collect()
}

fn table_refs(pmfs: &[Pmf16], rows: usize) -> Vec<&Pmf16> {
    (0..rows).flat_map(|_| pmfs.iter()).collect()
}

pub fn encode_full(pc: &PointCloud, m: &ModelParams) -> Result<Bitstream> {
    Ok(encode_with_report(pc, m)?.0)
}

pub fn encode_with_report(pc: &PointCloud, m: &ModelParams) -> Result<(Bitstream, CodingReport, LatentCode)> {
    pc.validate()?;
    if pc.depth < 3 {
        return Err(Error::Encode(format!("depth {} is below the 8× thumbnail stride", pc.depth)));
    }
    let code = encode_analysis(pc, m)?;
    let thumb: Vec<_> = code.coords.coords().iter().map(|c| c.map(|v| v / 8)).collect();
    let octree = octree_encode(&thumb, pc.depth - 3)?;
    let em = m.entropy_model()?;
    let pmfs = em.pmfs()?;
    let features = range_encode(&symbols(&code.quantized), &table_refs(&pmfs, code.coords.len()))?;
    let estimated = em.rate_bits(&code.quantized)?;
    let b = Bitstream {
        depth: pc.depth as u8,
        flags: if m.arch.transform { 0 } else { FLAG_NO_TRANSFORM },
        num_points: pc.len() as u32,
        counts: code.counts.map(|k| k as u64),
        latent_channels: m.arch.latent_channels as u8,
        octree,
        features,
    };
    let total = b.byte_len();
    let report = CodingReport {
        points: pc.len(),
        total_bytes: total,
        octree_bits: b.octree.len() * 8,
        feature_bits: b.features.len() * 8,
        estimated_feature_bits: estimated,
        bpp: total as f64 * 8.0 / pc.len() as f64,
    };
    Ok((b, report, code))
}

/// Recovers the quantized latent from a bitstream.
pub fn decode_latent(b: &Bitstream, m: &ModelParams) -> Result<SparseTensor> {
    require_student(m)?;
    if b.no_transform() == m.arch.transform {
        return Err(Error::Format(format!(
            "bitstream {} the transform module but the model {} it",
            if b.no_transform() { "omits" } else { "uses" },
            if m.arch.transform { "uses" } else { "omits" }
        )));
    }
    if b.latent_channels as usize != m.arch.latent_channels {
        return Err(Error::Format(format!("bitstream has {} latent channels, model {}", b.latent_channels, m.arch.latent_channels)));
    }
    if b.depth < 3 {
        return Err(Error::Format(format!("invalid depth {}", b.depth)));
    }
    let thumb = octree_decode(&b.octree, b.depth as u32 - 3)?;
    if thumb.is_empty() {
        return Err(Error::Decode("empty thumbnail geometry".into()));
    }
    let coords = CoordSet::new(thumb.iter().map(|c| c.map(|v| v * 8)).collect(), 8)?;
    let pmfs = m.entropy_model()?.pmfs()?;
    let c = m.arch.latent_channels;
    let syms = range_decode(&b.features, &table_refs(&pmfs, coords.len()))?;
    let data = syms.into_iter().map(|s| s as f64 - QMAX as f64).collect();
    SparseTensor::new(coords, Matrix::from_vec(thumb.len(), c, data))
}

pub fn decode_full(b: &Bitstream, m: &ModelParams) -> Result<PointCloud> {
    let latent = decode_latent(b, m)?;
    let k = b.counts.map(|v| v as usize);
    reconstruct(&latent, k, b.depth as u32, m)
}
