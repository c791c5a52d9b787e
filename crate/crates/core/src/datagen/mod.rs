//! Deterministic synthetic colored surfaces on a voxel grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{load_ply, save_ply, Coord, PlyFormat, PointCloud, Rgb};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    CubeSurface,
    SphereSurface,
    Plane,
    /// A smaller cube and sphere merged.
    Union,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorField {
    SmoothGradient,
    Checker,
    PerFace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub shape: Shape,
    pub depth: u32,
    pub color_field: ColorField,
    pub seed: u64,
    /// Bounding-box side in voxels; `None` spans the whole grid.
    #[serde(default)]
    pub extent: Option<u32>,
}

impl ShapeSpec {
    pub fn new(shape: Shape, color_field: ColorField, seed: u64) -> Self {
        Self { shape, depth: 6, color_field, seed, extent: None }
    }

    /// A randomly drawn shape of side 12 in a depth-6 grid.
    pub fn small(seed: u64) -> Self {
        random_spec(&mut ChaCha8Rng::seed_from_u64(seed), 6, 12..=12)
    }
}

const SHAPES: [Shape; 4] = [Shape::CubeSurface, Shape::SphereSurface, Shape::Plane, Shape::Union];
const FIELDS: [ColorField; 3] = [ColorField::SmoothGradient, ColorField::Checker, ColorField::PerFace];

/// Draws shape, color field, extent and seed from `rng`.
pub fn random_spec<R: Rng>(rng: &mut R, depth: u32, extent: std::ops::RangeInclusive<u32>) -> ShapeSpec {
    ShapeSpec {
        shape: SHAPES[rng.gen_range(0..SHAPES.len())],
        depth,
        color_field: FIELDS[rng.gen_range(0..FIELDS.len())],
        seed: rng.gen(),
        extent: Some(rng.gen_range(extent)),
    }
}

fn cube_surface(o: Coord, e: i32, out: &mut Vec<Coord>) {
    let hi = e - 1;
    for x in 0..e {
        for y in 0..e {
            for z in 0..e {
                if x == 0 || y == 0 || z == 0 || x == hi || y == hi || z == hi {
                    out.push([o[0] + x, o[1] + y, o[2] + z]);
                }
            }
        }
    }
}

/// Boundary voxels of a solid ball: inside, with at least one face
/// neighbor outside.
fn sphere_surface(o: Coord, e: i32, out: &mut Vec<Coord>) {
    let r = (e - 1) as f64 / 2.0;
    let inside = |p: [i32; 3]| {
        let d: f64 = p.iter().map(|&v| (v as f64 - r).powi(2)).sum();
        d <= (r + 0.5).powi(2)
    };
    for x in 0..e {
        for y in 0..e {
            for z in 0..e {
                let p = [x, y, z];
                if !inside(p) {
                    continue;
                }
                let boundary = (0..3).any(|a| {
                    [-1, 1].iter().any(|&s| {
                        let mut n = p;
                        n[a] += s;
                        !inside(n)
                    })
                });
                if boundary {
                    out.push([o[0] + x, o[1] + y, o[2] + z]);
                }
            }
        }
    }
}

/// Height field `w = round(a·u + b·v + c)` over an `e × e` square with
/// slopes below ½, along a random axis.
fn plane<R: Rng>(o: Coord, e: i32, rng: &mut R, out: &mut Vec<Coord>) {
    let a: f64 = rng.gen_range(-0.45..0.45);
    let b: f64 = rng.gen_range(-0.45..0.45);
    let span = (e - 1) as f64;
    let lo = (a.min(0.0) + b.min(0.0)) * span;
    let hi = (a.max(0.0) + b.max(0.0)) * span;
    let c = rng.gen_range(0.0..=(span - (hi - lo)).max(0.0)) - lo;
    let axis = rng.gen_range(0..3);
    for u in 0..e {
        for v in 0..e {
            let w = (a * u as f64 + b * v as f64 + c).round().clamp(0.0, span) as i32;
            let p = match axis {
                0 => [w, u, v],
                1 => [u, w, v],
                _ => [u, v, w],
            };
            out.push([o[0] + p[0], o[1] + p[1], o[2] + p[2]]);
        }
    }
}

fn q8(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn random_color<R: Rng>(rng: &mut R) -> Rgb {
    [0; 3].map(|_| q8(rng.gen_range(0.05..0.95)))
}

/// Per-voxel color change is at most 1/255 per channel before 8-bit
/// rounding, so face neighbors differ by at most 2/255 after it.
fn gradient_color(base: Rgb, g: &[[f64; 3]; 3], p: Coord) -> Rgb {
    let mut c = base;
    for (ch, v) in c.iter_mut().enumerate() {
        *v += (0..3).map(|a| g[ch][a] * p[a] as f64).sum::<f64>();
    }
    c.map(q8)
}

fn face_of(p: Coord, center: [f64; 3]) -> usize {
    let d = [0, 1, 2].map(|a| p[a] as f64 - center[a]);
    let mut axis = 0;
    for a in 1..3 {
        if d[a].abs() > d[axis].abs() {
            axis = a;
        }
    }
    2 * axis + (d[axis] >= 0.0) as usize
}

pub fn gen_cloud(spec: &ShapeSpec) -> Result<PointCloud> {
    if !(1..=16).contains(&spec.depth) {
        return Err(Error::Shape(format!("depth {} outside 1..=16", spec.depth)));
    }
    let grid = 1i64 << spec.depth;
    let e = spec.extent.map_or(grid, |v| v as i64);
    if e < 2 || e > grid {
        return Err(Error::Shape(format!("extent {e} must be in 2..={grid}")));
    }
    let e = e as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let o: Coord = [0; 3].map(|_| rng.gen_range(0..=(grid as i32 - e)));

    let mut coords = Vec::new();
    match spec.shape {
        Shape::CubeSurface => cube_surface(o, e, &mut coords),
        Shape::SphereSurface => sphere_surface(o, e, &mut coords),
        Shape::Plane => plane(o, e, &mut rng, &mut coords),
        Shape::Union => {
            let sub = (e * 2 / 3).max(2);
            let place = |rng: &mut ChaCha8Rng| [0, 1, 2].map(|a| o[a] + rng.gen_range(0..=e - sub));
            let oc = place(&mut rng);
            cube_surface(oc, sub, &mut coords);
            let os = place(&mut rng);
            sphere_surface(os, sub, &mut coords);
        }
    }
    crate::cloud::canonicalize(&mut coords);

    let center = [0, 1, 2].map(|a| o[a] as f64 + (e - 1) as f64 / 2.0);
    let colors: Vec<Rgb> = match spec.color_field {
        ColorField::SmoothGradient => {
            let base = random_color(&mut rng);
            let mut g = [[0.0; 3]; 3];
            for row in &mut g {
                let w: [f64; 3] = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
                let l1: f64 = w.iter().map(|v: &f64| v.abs()).sum::<f64>().max(1e-9);
                *row = w.map(|v| v / l1 / 255.0);
            }
            coords.iter().map(|&p| gradient_color(base, &g, [p[0] - o[0], p[1] - o[1], p[2] - o[2]])).collect()
        }
        ColorField::Checker => {
            let (a, b) = (random_color(&mut rng), random_color(&mut rng));
            let cell = rng.gen_range(2..=4);
            coords
                .iter()
                .map(|p| {
                    let parity = (0..3).map(|k| (p[k] - o[k]) / cell).sum::<i32>() % 2;
                    if parity == 0 { a } else { b }
                })
                .collect()
        }
        ColorField::PerFace => {
            let palette: Vec<Rgb> = (0..6).map(|_| random_color(&mut rng)).collect();
            coords.iter().map(|&p| palette[face_of(p, center)]).collect()
        }
    };
    PointCloud::new(coords, colors, spec.depth)
}

/// Manifest entry of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub shape: Shape,
    pub color_field: ColorField,
    pub seed: u64,
    pub depth: u32,
    pub extent: Option<u32>,
    pub points: usize,
}

pub const MANIFEST: &str = "manifest.json";

/// Options for [`gen_dataset`].
#[derive(Clone, Debug)]
pub struct DatasetOptions {
    pub depth: u32,
    pub extent: std::ops::RangeInclusive<u32>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self { depth: 6, extent: 10..=16 }
    }
}

/// Writes `n` PLY files plus `manifest.json`; file `i` draws its spec from
/// a stream derived from `(seed, i)`.
pub fn gen_dataset(n: usize, out_dir: impl AsRef<Path>, seed: u64, opts: &DatasetOptions) -> Result<Vec<ManifestEntry>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let spec = random_spec(&mut rng, opts.depth, opts.extent.clone());
        let pc = gen_cloud(&spec)?;
        let file = format!("cloud_{i:05}.ply");
        save_ply(&pc, dir.join(&file), PlyFormat::BinaryLittleEndian)?;
        entries.push(ManifestEntry {
            file,
            shape: spec.shape,
            color_field: spec.color_field,
            seed: spec.seed,
            depth: spec.depth,
            extent: spec.extent,
            points: pc.len(),
        });
    }
    std::fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&entries)?)?;
    Ok(entries)
}

/// Loads every cloud listed in a dataset manifest, in manifest order.
/// Directories without a manifest fall back to all `*.ply` files sorted by name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<PointCloud>> {
    let dir = dir.as_ref();
    let manifest = dir.join(MANIFEST);
    let files: Vec<PathBuf> = if manifest.exists() {
        let entries: Vec<ManifestEntry> = serde_json::from_str(&std::fs::read_to_string(&manifest)?)?;
        entries.into_iter().map(|e| dir.join(e.file)).collect()
    } else {
        let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ply"))
            .collect();
        v.sort();
        v
    };
    if files.is_empty() {
        return Err(Error::Empty(format!("no point clouds in {}", dir.display())));
    }
    files.iter().map(load_ply).collect()
}

/// Counts per shape, for summaries.
pub fn shape_histogram(entries: &[ManifestEntry]) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for e in entries {
        *h.entry(format!("{:?}", e.shape)).or_insert(0) += 1;
    }
    h
}
