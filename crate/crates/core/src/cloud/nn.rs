use rustc_hash::FxHashMap;

use super::{morton, squared_distance, Coord};
use crate::error::{Error, Result};

const CELL: i32 = 8;

/// Exact nearest-neighbor index over integer coordinates.
///
/// Points are bucketed on a uniform grid of pitch 8; queries search
/// Chebyshev rings of cells outward until no unvisited cell can hold a
/// point at distance less than or equal to the best found. Ties are
/// broken by the lowest Morton code of the target point.
#[derive(Clone, Debug)]
pub struct NnIndex {
    points: Vec<Coord>,
    buckets: FxHashMap<Coord, Vec<u32>>,
    cell_lo: Coord,
    cell_hi: Coord,
}

impl NnIndex {
    pub fn new(points: &[Coord]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("nearest-neighbor target set is empty".into()));
        }
        let mut buckets: FxHashMap<Coord, Vec<u32>> = FxHashMap::default();
        let mut cell_lo = [i32::MAX; 3];
        let mut cell_hi = [i32::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let cell = p.map(|v| v.div_euclid(CELL));
            for k in 0..3 {
                cell_lo[k] = cell_lo[k].min(cell[k]);
                cell_hi[k] = cell_hi[k].max(cell[k]);
            }
            buckets.entry(cell).or_default().push(i as u32);
        }
        Ok(Self { points: points.to_vec(), buckets, cell_lo, cell_hi })
    }

    pub fn points(&self) -> &[Coord] {
        &self.points
    }

    /// Returns `(index, squared distance)` of the nearest target point.
    pub fn nearest(&self, q: Coord) -> (usize, i64) {
        let qc = q.map(|v| v.div_euclid(CELL));
        // Rings beyond this radius contain no occupied cells.
        let max_ring = (0..3)
            .map(|k| (qc[k] - self.cell_lo[k]).abs().max((self.cell_hi[k] - qc[k]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, i64, u64)> = None;
        for r in 0..=max_ring {
            self.visit_ring(qc, r, |i| {
                let p = self.points[i];
                let d = squared_distance(p, q);
                let m = morton(p);
                let better = match best {
                    None => true,
                    Some((_, bd, bm)) => d < bd || (d == bd && m < bm),
                };
                if better {
                    best = Some((i, d, m));
                }
            });
            if let Some((_, bd, _)) = best {
                let lb = (r as i64 * CELL as i64 + 1).pow(2);
                if lb > bd {
                    break;
                }
            }
        }
        let (i, d, _) = best.expect("index is non-empty");
        (i, d)
    }

    fn visit_ring(&self, qc: Coord, r: i32, mut f: impl FnMut(usize)) {
        let mut visit = |cell: Coord| {
            if let Some(ids) = self.buckets.get(&cell) {
                for &i in ids {
                    f(i as usize);
                }
            }
        };
        if r == 0 {
            visit(qc);
            return;
        }
        for dx in -r..=r {
            for dy in -r..=r {
                if dx.abs() == r || dy.abs() == r {
                    for dz in -r..=r {
                        visit([qc[0] + dx, qc[1] + dy, qc[2] + dz]);
                    }
                } else {
                    visit([qc[0] + dx, qc[1] + dy, qc[2] - r]);
                    visit([qc[0] + dx, qc[1] + dy, qc[2] + r]);
                }
            }
        }
    }
}
