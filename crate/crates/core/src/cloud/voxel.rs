use rustc_hash::FxHashMap;

use super::{canonicalize, Coord, PointCloud, Rgb};
use crate::error::{Error, Result};

/// Merges duplicate coordinates by averaging their colors.
///
/// Output keeps the order of first occurrence.
pub fn merge_duplicates(coords: &[Coord], colors: &[Rgb]) -> (Vec<Coord>, Vec<Rgb>) {
    let mut slot: FxHashMap<Coord, usize> = FxHashMap::default();
    let mut out_coords = Vec::new();
    let mut sums: Vec<[f64; 3]> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for (c, col) in coords.iter().zip(colors) {
        let i = *slot.entry(*c).or_insert_with(|| {
            out_coords.push(*c);
            sums.push([0.0; 3]);
            counts.push(0);
            out_coords.len() - 1
        });
        for k in 0..3 {
            sums[i][k] += col[k];
        }
        counts[i] += 1;
    }
    let out_colors = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.map(|v| v / n as f64))
        .collect();
    (out_coords, out_colors)
}

/// Quantizes points given in voxel units onto the `2^depth` grid.
///
/// Each point is rounded to the nearest integer and clamped into range;
/// colors of points that collide in one voxel are averaged.
pub fn voxelize(points: &[[f64; 3]], colors: &[Rgb], depth: u32) -> Result<PointCloud> {
    if !(1..=16).contains(&depth) {
        return Err(Error::Config(format!("voxelize depth {depth} outside [1, 16]")));
    }
    if points.len() != colors.len() {
        return Err(Error::Shape(format!(
            "{} points but {} colors",
            points.len(),
            colors.len()
        )));
    }
    let hi = ((1u64 << depth) - 1) as f64;
    let coords: Vec<Coord> = points
        .iter()
        .map(|p| p.map(|v| v.round().clamp(0.0, hi) as i32))
        .collect();
    let colors: Vec<Rgb> = colors.iter().map(|c| c.map(|v| v.clamp(0.0, 1.0))).collect();
    let (coords, colors) = merge_duplicates(&coords, &colors);
    Ok(PointCloud { coords, colors, depth })
}

/// Maps arbitrary real points into voxel units: the bounding box is
/// translated to the origin and its longest side scaled to `2^depth - 1`.
pub fn normalize_to_grid(points: &[[f64; 3]], depth: u32) -> Vec<[f64; 3]> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    let scale = if extent > 0.0 { ((1u64 << depth) - 1) as f64 / extent } else { 1.0 };
    points
        .iter()
        .map(|p| [(p[0] - lo[0]) * scale, (p[1] - lo[1]) * scale, (p[2] - lo[2]) * scale])
        .collect()
}

/// Splits a cloud into non-overlapping cubes of side `2^cube_bits`.
///
/// Cubes are returned in Morton order of their origin, empty cubes are
/// omitted, and each cube holds local coordinates (global minus origin).
pub fn partition_cubes(pc: &PointCloud, cube_bits: u32) -> Result<Vec<(Coord, PointCloud)>> {
    if cube_bits == 0 || cube_bits > pc.depth {
        return Err(Error::Config(format!(
            "cube_bits {cube_bits} must be in [1, depth={}]",
            pc.depth
        )));
    }
    let side = 1i32 << cube_bits;
    let mut cubes: FxHashMap<Coord, PointCloud> = FxHashMap::default();
    for (c, col) in pc.coords.iter().zip(&pc.colors) {
        let origin = c.map(|v| v.div_euclid(side) * side);
        let cube = cubes.entry(origin).or_insert_with(|| PointCloud::empty(cube_bits));
        cube.coords.push([c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]]);
        cube.colors.push(*col);
    }
    let mut out: Vec<(Coord, PointCloud)> = cubes.into_iter().collect();
    out.sort_unstable_by_key(|(o, _)| super::morton(*o));
    Ok(out)
}

/// Inverse of [`partition_cubes`] at the given global depth.
pub fn reassemble_cubes(parts: &[(Coord, PointCloud)], depth: u32) -> Result<PointCloud> {
    let mut pc = PointCloud::empty(depth);
    for (origin, cube) in parts {
        for (c, col) in cube.coords.iter().zip(&cube.colors) {
            pc.coords.push([c[0] + origin[0], c[1] + origin[1], c[2] + origin[2]]);
            pc.colors.push(*col);
        }
    }
    pc.validate()?;
    Ok(pc)
}

/// Unique set of `floor(c / factor)` in Morton order.
///
/// Note the result is in units of the coarse grid; multiply by `factor`
/// to get stride-aligned coordinates.
pub fn downsample_coords(coords: &[Coord], factor: i32) -> Result<Vec<Coord>> {
    if factor < 1 || factor.count_ones() != 1 {
        return Err(Error::Config(format!("downsample factor {factor} is not a power of two")));
    }
    let mut out: Vec<Coord> = coords.iter().map(|c| c.map(|v| v.div_euclid(factor))).collect();
    canonicalize(&mut out);
    Ok(out)
}

/// Voxel-mean pooling of colors onto the stride-`factor` grid.
///
/// Returned coordinates are stride-aligned (multiples of `factor`) and
/// Morton ordered.
pub fn pool_colors(coords: &[Coord], colors: &[Rgb], factor: i32) -> (Vec<Coord>, Vec<Rgb>) {
    let aligned: Vec<Coord> =
        coords.iter().map(|c| c.map(|v| v.div_euclid(factor) * factor)).collect();
    let (mut pc, mut pcol) = merge_duplicates(&aligned, colors);
    let mut idx: Vec<usize> = (0..pc.len()).collect();
    idx.sort_unstable_by_key(|&i| super::morton(pc[i]));
    pc = idx.iter().map(|&i| pc[i]).collect();
    pcol = idx.iter().map(|&i| pcol[i]).collect();
    (pc, pcol)
}
