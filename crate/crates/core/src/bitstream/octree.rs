//! Lossless breadth-first octree coding of voxel coordinate sets.
//!
//! Each occupied node at level ℓ emits one byte whose bit `k` marks child
//! `k = (x_bit << 2) | (y_bit << 1) | z_bit`. Bytes go level by level in
//! Morton order and are range coded with an adaptive order-0 model. An
//! empty set is a single zero root byte.

use super::adaptive::AdaptiveByteModel;
use super::range::{RangeDecoder, RangeEncoder};
use crate::cloud::{morton, Coord};
use crate::error::{Error, Result};

fn checked_mortons(coords: &[Coord], depth: u32) -> Result<Vec<u64>> {
    if depth > 21 {
        return Err(Error::Encode(format!("octree depth {depth} exceeds 21")));
    }
    let hi = (1i64 << depth) - 1;
    let mut m = Vec::with_capacity(coords.len());
    for c in coords {
        if c.iter().any(|&v| v < 0 || v as i64 > hi) {
            return Err(Error::Encode(format!("coordinate {c:?} outside octree of depth {depth}")));
        }
        m.push(morton(*c));
    }
    m.sort_unstable();
    m.dedup();
    Ok(m)
}

/// Raw breadth-first occupancy bytes, before entropy coding.
pub fn occupancy_bytes(coords: &[Coord], depth: u32) -> Result<Vec<u8>> {
    let m = checked_mortons(coords, depth)?;
    if m.is_empty() {
        return Ok(vec![0]);
    }
    if depth == 0 {
        return Ok(vec![1]);
    }
    let mut out = Vec::new();
    for level in 0..depth {
        let shift = 3 * (depth - level - 1);
        let mut node = u64::MAX;
        for &code in &m {
            let parent = code >> (shift + 3);
            let bit = 1u8 << ((code >> shift) & 7);
            if parent != node {
                out.push(0);
                node = parent;
            }
            *out.last_mut().unwrap() |= bit;
        }
    }
    Ok(out)
}

fn decode_morton(code: u64) -> Coord {
    let mut c = [0i32; 3];
    for bit in 0..21 {
        c[0] |= (((code >> (3 * bit + 2)) & 1) as i32) << bit;
        c[1] |= (((code >> (3 * bit + 1)) & 1) as i32) << bit;
        c[2] |= (((code >> (3 * bit)) & 1) as i32) << bit;
    }
    c
}

/// Rebuilds the coordinate set from occupancy bytes pulled from `next`.
fn expand(depth: u32, mut next: impl FnMut() -> Result<u8>) -> Result<Vec<Coord>> {
    let root = next()?;
    if root == 0 {
        return Ok(Vec::new());
    }
    if depth == 0 {
        return Ok(vec![[0, 0, 0]]);
    }
    let mut nodes = vec![0u64];
    let mut byte = Some(root);
    for _ in 0..depth {
        let mut children = Vec::with_capacity(nodes.len() * 4);
        for &n in &nodes {
            let occ = match byte.take() {
                Some(b) => b,
                None => next()?,
            };
            if occ == 0 {
                return Err(Error::Decode("empty occupancy byte inside octree".into()));
            }
            for k in 0..8u64 {
                if occ >> k & 1 == 1 {
                    children.push(n << 3 | k);
                }
            }
        }
        nodes = children;
    }
    Ok(nodes.into_iter().map(decode_morton).collect())
}

/// Inverse of [`occupancy_bytes`]; coordinates come back in Morton order.
pub fn coords_from_occupancy(bytes: &[u8], depth: u32) -> Result<Vec<Coord>> {
    let mut it = bytes.iter();
    let coords = expand(depth, || it.next().copied().ok_or_else(|| Error::Decode("occupancy bytes exhausted".into())))?;
    if it.next().is_some() {
        return Err(Error::Decode("trailing occupancy bytes".into()));
    }
    Ok(coords)
}

pub fn octree_encode(coords: &[Coord], depth: u32) -> Result<Vec<u8>> {
    let raw = occupancy_bytes(coords, depth)?;
    let mut model = AdaptiveByteModel::new();
    let mut enc = RangeEncoder::new();
    for b in raw {
        model.encode(&mut enc, b)?;
    }
    Ok(enc.finish())
}

pub fn octree_decode(bytes: &[u8], depth: u32) -> Result<Vec<Coord>> {
    let mut model = AdaptiveByteModel::new();
    let mut dec = RangeDecoder::new(bytes)?;
    expand(depth, || model.decode(&mut dec))
}
