use rustc_hash::FxHashMap;

use crate::cloud::{morton, Coord};
use crate::error::{Error, Result};

/// Canonically ordered set of stride-aligned voxel coordinates.
///
/// Coordinates are unique and sorted by Morton code, so two sets holding
/// the same logical coordinates are identical element for element.
#[derive(Clone, Debug)]
pub struct CoordSet {
    coords: Vec<Coord>,
    stride: i32,
    index: FxHashMap<Coord, u32>,
}

impl PartialEq for CoordSet {
    fn eq(&self, other: &Self) -> bool {
        self.stride == other.stride && self.coords == other.coords
    }
}

impl CoordSet {
    /// Builds a set from arbitrary coordinates, sorting and deduplicating.
    pub fn new(mut coords: Vec<Coord>, stride: i32) -> Result<Self> {
        if stride < 1 || stride.count_ones() != 1 {
            return Err(Error::Config(format!("stride {stride} is not a power of two")));
        }
        if let Some(c) = coords.iter().find(|c| c.iter().any(|&v| v < 0 || v % stride != 0)) {
            return Err(Error::Shape(format!("coordinate {c:?} not a non-negative multiple of stride {stride}")));
        }
        crate::cloud::canonicalize(&mut coords);
        Ok(Self::from_sorted(coords, stride))
    }

    /// Caller guarantees `coords` is Morton sorted, unique and aligned.
    pub(crate) fn from_sorted(coords: Vec<Coord>, stride: i32) -> Self {
        debug_assert!(coords.windows(2).all(|w| morton(w[0]) < morton(w[1])));
        let index = coords.iter().enumerate().map(|(i, c)| (*c, i as u32)).collect();
        Self { coords, stride, index }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn stride(&self) -> i32 {
        self.stride
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn find(&self, c: &Coord) -> Option<usize> {
        self.index.get(c).map(|&i| i as usize)
    }

    pub fn contains(&self, c: &Coord) -> bool {
        self.index.contains_key(c)
    }

    /// Parents at twice the stride: `floor(c / 2s) * 2s`.
    pub fn parents(&self) -> CoordSet {
        let s2 = self.stride * 2;
        let mut out: Vec<Coord> = Vec::with_capacity(self.len() / 2 + 1);
        for c in &self.coords {
            let p = c.map(|v| v.div_euclid(s2) * s2);
            // Morton order groups siblings together.
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        CoordSet::from_sorted(out, s2)
    }

    /// All eight children at half the stride, in Morton order.
    pub fn children(&self) -> Result<CoordSet> {
        if self.stride < 2 {
            return Err(Error::Shape("cannot upsample a unit-stride tensor".into()));
        }
        let h = self.stride / 2;
        let mut out = Vec::with_capacity(self.len() * 8);
        for c in &self.coords {
            for k in 0..8 {
                out.push(child_of(*c, k, h));
            }
        }
        Ok(CoordSet::from_sorted(out, h))
    }

    /// Keeps the coordinates at the given ascending positions.
    pub fn select(&self, kept: &[usize]) -> CoordSet {
        CoordSet::from_sorted(kept.iter().map(|&i| self.coords[i]).collect(), self.stride)
    }
}

/// Child `k` of a parent, bit layout `(x << 2) | (y << 1) | z`.
#[inline]
pub fn child_of(c: Coord, k: usize, half: i32) -> Coord {
    [
        c[0] + ((k >> 2) & 1) as i32 * half,
        c[1] + ((k >> 1) & 1) as i32 * half,
        c[2] + (k & 1) as i32 * half,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_and_dedups() {
        let s = CoordSet::new(vec![[2, 0, 0], [0, 0, 2], [2, 0, 0]], 2).unwrap();
        assert_eq!(s.coords(), &[[0, 0, 2], [2, 0, 0]]);
        assert_eq!(s.find(&[2, 0, 0]), Some(1));
        assert!(CoordSet::new(vec![[1, 0, 0]], 2).is_err());
    }

    #[test]
    fn children_then_parents_roundtrip() {
        let s = CoordSet::new(vec![[0, 0, 0], [4, 0, 4], [8, 12, 4]], 4).unwrap();
        let ch = s.children().unwrap();
        assert_eq!(ch.len(), 24);
        assert_eq!(ch.stride(), 2);
        let sorted = CoordSet::new(ch.coords().to_vec(), 2).unwrap();
        assert_eq!(sorted, ch);
        assert_eq!(ch.parents(), s);
    }

    #[test]
    fn unit_stride_has_no_children() {
        let s = CoordSet::new(vec![[0, 0, 0]], 1).unwrap();
        assert!(s.children().is_err());
    }
}
