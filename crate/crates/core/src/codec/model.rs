//! Architecture configuration, parameter registry and checkpoint files.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "SEDDCKPT"
//! version u32      1
//! meta    u32 length + UTF-8 JSON  {"kind": ..., "arch": {...}}
//! count   u32      number of tensors
//! per tensor, sorted by name:
//!   name  u32 length + UTF-8
//!   rank  u32, then rank × u32 dims
//!   data  prod(dims) × f32
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entropy::EntropyModel;
use crate::error::{Error, Result};
use crate::sparse::layers::add_irn_params;
use crate::sparse::{Kernel, ParamStore, ParamTensor};

const CKPT_MAGIC: &[u8; 8] = b"SEDDCKPT";
const CKPT_VERSION: u32 = 1;

/// Layer widths. Defaults: encoder 3→16→32→64, latent 8, geometry
/// decoder 32, attribute decoder 64→32→16.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub enc_channels: [usize; 3],
    pub latent_channels: usize,
    pub geo_channels: usize,
    pub attr_channels: [usize; 3],
    /// Geometry decoder reads the latent through the transform module.
    pub transform: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { enc_channels: [16, 32, 64], latent_channels: 8, geo_channels: 32, attr_channels: [64, 32, 16], transform: true }
    }
}

impl ArchConfig {
    /// Reduced widths for fast tests and gradient checks.
    pub fn tiny() -> Self {
        Self { enc_channels: [4, 4, 8], latent_channels: 2, geo_channels: 4, attr_channels: [8, 4, 4], transform: true }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = self.enc_channels.iter().chain(&self.attr_channels).chain([&self.geo_channels]);
        for &c in widths {
            if c == 0 || c % 4 != 0 {
                return Err(Error::Config(format!("block width {c} must be a positive multiple of 4")));
            }
        }
        if self.latent_channels == 0 || self.latent_channels > 255 {
            return Err(Error::Config("latent channel count must be in 1..=255".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Joint geometry + attribute codec.
    Student,
    /// Geometry-only model whose latent supervises the transform module.
    Teacher,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    kind: ModelKind,
    arch: ArchConfig,
}

/// Named parameters plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub store: ParamStore,
}

fn add_encoder(s: &mut ParamStore, prefix: &str, cin: usize, widths: [usize; 3], rng: &mut ChaCha8Rng) -> Result<()> {
    let mut prev = cin;
    for (i, &c) in widths.iter().enumerate() {
        s.add_conv(&format!("{prefix}.s{i}.conv"), Kernel::Cube3, prev, c, rng);
        add_irn_params(s, &format!("{prefix}.s{i}.irn"), c, rng)?;
        s.add_conv(&format!("{prefix}.s{i}.down"), Kernel::Down2, c, c, rng);
        prev = c;
    }
    Ok(())
}

fn add_geo_decoder(s: &mut ParamStore, prefix: &str, cin: usize, c: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut prev = cin;
    for i in 0..3 {
        s.add_conv(&format!("{prefix}.s{i}.up"), Kernel::Up2, prev, c, rng);
        add_irn_params(s, &format!("{prefix}.s{i}.irn"), c, rng)?;
        s.add_conv(&format!("{prefix}.s{i}.head"), Kernel::Point, c, 1, rng);
        prev = c;
    }
    Ok(())
}

fn add_entropy(s: &mut ParamStore, prefix: &str, c: usize) {
    s.insert(format!("{prefix}.mu"), ParamTensor::zeros(vec![c]));
    s.insert(format!("{prefix}.log_b"), ParamTensor::zeros(vec![c]));
}

fn color_head(s: &mut ParamStore, name: &str, cin: usize, rng: &mut ChaCha8Rng) {
    s.add_conv(name, Kernel::Point, cin, 3, rng);
    s.get_mut(&format!("{name}.weight")).expect("just added").data.fill(0.0);
    s.get_mut(&format!("{name}.bias")).expect("just added").data = vec![0.5; 3];
}

impl ModelParams {
    pub fn new_student(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let a = &arch;
        add_encoder(&mut s, "encoder", 3, a.enc_channels, &mut rng)?;
        s.add_conv("encoder.out", Kernel::Point, a.enc_channels[2], a.latent_channels, &mut rng);
        add_entropy(&mut s, "entropy", a.latent_channels);
        let geo_in = if a.transform {
            s.add_conv("transform.fc", Kernel::Point, a.latent_channels, a.geo_channels, &mut rng);
            s.add_conv("transform.conv", Kernel::Cube3, a.geo_channels, a.geo_channels, &mut rng);
            a.geo_channels
        } else {
            a.latent_channels
        };
        add_geo_decoder(&mut s, "geo_decoder", geo_in, a.geo_channels, &mut rng)?;
        let mut prev = a.latent_channels;
        for (i, &c) in a.attr_channels.iter().enumerate() {
            s.add_conv(&format!("attr_decoder.s{i}.up"), Kernel::Up2, prev, c, &mut rng);
            add_irn_params(&mut s, &format!("attr_decoder.s{i}.irn"), c, &mut rng)?;
            prev = c;
        }
        color_head(&mut s, "attr_decoder.aux0", a.attr_channels[0], &mut rng);
        color_head(&mut s, "attr_decoder.aux1", a.attr_channels[1], &mut rng);
        color_head(&mut s, "attr_decoder.head", a.attr_channels[2], &mut rng);
        Ok(Self { kind: ModelKind::Student, arch, store: s })
    }

    /// Geometry-only teacher: occupancy input, same strides as the student,
    /// latent width equal to the geometry feature width.
    pub fn new_teacher(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        add_encoder(&mut s, "teacher.encoder", 1, arch.enc_channels, &mut rng)?;
        s.add_conv("teacher.encoder.out", Kernel::Point, arch.enc_channels[2], arch.geo_channels, &mut rng);
        add_entropy(&mut s, "teacher.entropy", arch.geo_channels);
        add_geo_decoder(&mut s, "teacher.geo_decoder", arch.geo_channels, arch.geo_channels, &mut rng)?;
        Ok(Self { kind: ModelKind::Teacher, arch, store: s })
    }

    fn entropy_prefix(&self) -> &'static str {
        match self.kind {
            ModelKind::Student => "entropy",
            ModelKind::Teacher => "teacher.entropy",
        }
    }

    pub fn entropy_model(&self) -> Result<EntropyModel> {
        let p = self.entropy_prefix();
        let em = EntropyModel {
            mu: self.store.get(&format!("{p}.mu"))?.data.clone(),
            log_b: self.store.get(&format!("{p}.log_b"))?.data.clone(),
        };
        Ok(em)
    }

    pub fn num_params(&self) -> usize {
        self.store.numel()
    }

    /// Rounds every value to single precision, as a save/load cycle would.
    pub fn round_to_f32(&mut self) {
        for (_, t) in self.store.iter_mut() {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = serde_json::to_vec(&Meta { kind: self.kind, arch: self.arch.clone() })?;
        w.write_all(CKPT_MAGIC)?;
        w.write_all(&CKPT_VERSION.to_le_bytes())?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.store.len() as u32).to_le_bytes())?;
        for (name, t) in self.store.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(t.data.len() * 4);
            for &v in &t.data {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("checkpoint too short".into()))?;
        if &magic != CKPT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CKPT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta: Meta = serde_json::from_slice(&read_bytes(&mut r)?)?;
        meta.arch.validate()?;
        let count = read_u32(&mut r)?;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?).map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
            let rank = read_u32(&mut r)? as usize;
            if rank > 4 {
                return Err(Error::Format(format!("parameter '{name}' has rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = shape.iter().product();
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
            store.insert(name, ParamTensor { shape, data });
        }
        // The registry for this architecture must match the file exactly.
        let fresh = match meta.kind {
            ModelKind::Student => Self::new_student(meta.arch.clone(), 0)?,
            ModelKind::Teacher => Self::new_teacher(meta.arch.clone(), 0)?,
        };
        for (name, t) in fresh.store.iter() {
            let got = store.get(name).map_err(|_| Error::Format(format!("checkpoint lacks parameter '{name}'")))?;
            if got.shape != t.shape {
                return Err(Error::Format(format!("parameter '{name}' has shape {:?}, expected {:?}", got.shape, t.shape)));
            }
        }
        if store.len() != fresh.store.len() {
            return Err(Error::Format("checkpoint has unexpected extra parameters".into()));
        }
        if !store.all_finite() {
            return Err(Error::Numerical("checkpoint contains non-finite values".into()));
        }
        Ok(Self { kind: meta.kind, arch: meta.arch, store })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(f))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Format(format!("implausible string length {n}")));
    }
    let mut v = vec![0u8; n];
    r.read_exact(&mut v)?;
    Ok(v)
}
