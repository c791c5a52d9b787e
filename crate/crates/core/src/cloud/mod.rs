//! Voxelized colored point clouds and the geometry utilities around them.

mod color;
mod nn;
mod ply;
mod voxel;

pub use color::{rgb_to_y8, rgb_to_yuv, yuv_to_rgb, YuvColor, RGB_TO_YUV};
pub use nn::NnIndex;
pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyFormat};
pub use voxel::{
    downsample_coords, merge_duplicates, normalize_to_grid, partition_cubes, pool_colors,
    reassemble_cubes, voxelize,
};

use crate::error::{Error, Result};

/// Integer voxel coordinate.
pub type Coord = [i32; 3];

/// RGB triple with components in `[0, 1]`.
pub type Rgb = [f64; 3];

/// Interleaves the low 21 bits of each component, x most significant.
///
/// Coordinates must be non-negative.
pub fn morton(c: Coord) -> u64 {
    debug_assert!(c.iter().all(|&v| v >= 0), "morton code of negative coord {c:?}");
    spread(c[0] as u64) << 2 | spread(c[1] as u64) << 1 | spread(c[2] as u64)
}

fn spread(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | x << 32) & 0x1f_0000_0000_ffff;
    x = (x | x << 16) & 0x1f_0000_ff00_00ff;
    x = (x | x << 8) & 0x100f_00f0_0f00_f00f;
    x = (x | x << 4) & 0x10c3_0c30_c30c_30c3;
    x = (x | x << 2) & 0x1249_2492_4924_9249;
    x
}

/// Sorts coordinates by Morton code and removes duplicates.
pub fn canonicalize(coords: &mut Vec<Coord>) {
    coords.sort_unstable_by_key(|&c| morton(c));
    coords.dedup();
}

pub fn squared_distance(a: Coord, b: Coord) -> i64 {
    let dx = (a[0] - b[0]) as i64;
    let dy = (a[1] - b[1]) as i64;
    let dz = (a[2] - b[2]) as i64;
    dx * dx + dy * dy + dz * dz
}

/// A voxelized point cloud with one RGB color per occupied voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub coords: Vec<Coord>,
    pub colors: Vec<Rgb>,
    /// Bit depth: every coordinate component lies in `[0, 2^depth - 1]`.
    pub depth: u32,
}

impl PointCloud {
    pub fn new(coords: Vec<Coord>, colors: Vec<Rgb>, depth: u32) -> Result<Self> {
        let pc = Self { coords, colors, depth };
        pc.validate()?;
        Ok(pc)
    }

    pub fn empty(depth: u32) -> Self {
        Self { coords: Vec::new(), colors: Vec::new(), depth }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Largest admissible coordinate component.
    pub fn max_coord(&self) -> i32 {
        ((1u64 << self.depth) - 1) as i32
    }

    /// Checks uniqueness, length agreement and coordinate range.
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.depth) {
            return Err(Error::InvalidCloud(format!("depth {} outside [1, 16]", self.depth)));
        }
        if self.coords.len() != self.colors.len() {
            return Err(Error::InvalidCloud(format!(
                "{} coordinates but {} colors",
                self.coords.len(),
                self.colors.len()
            )));
        }
        let hi = self.max_coord();
        if let Some(c) = self.coords.iter().find(|c| c.iter().any(|&v| v < 0 || v > hi)) {
            return Err(Error::InvalidCloud(format!(
                "coordinate {c:?} outside [0, {hi}] at depth {}",
                self.depth
            )));
        }
        let mut seen = rustc_hash::FxHashSet::default();
        for c in &self.coords {
            if !seen.insert(*c) {
                return Err(Error::InvalidCloud(format!("duplicate coordinate {c:?}")));
            }
        }
        Ok(())
    }

    /// Returns a copy with points ordered by Morton code.
    pub fn sorted(&self) -> PointCloud {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_unstable_by_key(|&i| morton(self.coords[i]));
        PointCloud {
            coords: idx.iter().map(|&i| self.coords[i]).collect(),
            colors: idx.iter().map(|&i| self.colors[i]).collect(),
            depth: self.depth,
        }
    }

    /// Mean color over all points.
    pub fn mean_color(&self) -> Rgb {
        let mut acc = [0.0; 3];
        for c in &self.colors {
            for k in 0..3 {
                acc[k] += c[k];
            }
        }
        let n = self.len().max(1) as f64;
        acc.map(|v| v / n)
    }
}
