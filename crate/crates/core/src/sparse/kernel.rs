use serde::{Deserialize, Serialize};

use super::coords::CoordSet;
use crate::error::{Error, Result};

/// Supported convolution geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kernel {
    /// 1×1×1, stride 1.
    Point,
    /// 3×3×3, stride 1; output coordinates equal input coordinates.
    Cube3,
    /// 2×2×2, stride 2 downsampling.
    Down2,
    /// 2×2×2, stride 2 generative transposed convolution.
    Up2,
}

impl Kernel {
    pub fn volume(self) -> usize {
        match self {
            Kernel::Point => 1,
            Kernel::Cube3 => 27,
            Kernel::Down2 | Kernel::Up2 => 8,
        }
    }

    /// Taps expected to hit an occupied voxel on a 2-manifold surface;
    /// the fan-in used for weight init.
    pub fn surface_taps(self) -> usize {
        match self {
            Kernel::Point | Kernel::Up2 => 1,
            Kernel::Cube3 => 9,
            Kernel::Down2 => 4,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Kernel::Point => 1,
            Kernel::Cube3 => 3,
            Kernel::Down2 | Kernel::Up2 => 2,
        }
    }
}

/// Offset of a 3×3×3 kernel tap, index `(dx+1)*9 + (dy+1)*3 + (dz+1)`.
#[inline]
pub fn cube3_offset(k: usize) -> [i32; 3] {
    [(k / 9) as i32 - 1, ((k / 3) % 3) as i32 - 1, (k % 3) as i32 - 1]
}

pub const CUBE3_CENTER: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MapEntry {
    pub input: u32,
    pub tap: u32,
}

/// Input/output correspondence of a sparse convolution, grouped by
/// output row. Within a row, entries are ordered by tap index, which
/// fixes the floating-point summation order.
#[derive(Clone, Debug)]
pub struct KernelMap {
    pub kernel: Kernel,
    pub n_in: usize,
    pub n_out: usize,
    pub out_ptr: Vec<u32>,
    pub entries: Vec<MapEntry>,
}

impl KernelMap {
    pub fn row(&self, i: usize) -> &[MapEntry] {
        &self.entries[self.out_ptr[i] as usize..self.out_ptr[i + 1] as usize]
    }

    pub fn build(kernel: Kernel, input: &CoordSet, output: &CoordSet) -> Result<Self> {
        let mut out_ptr = Vec::with_capacity(output.len() + 1);
        let mut entries = Vec::new();
        out_ptr.push(0u32);
        match kernel {
            Kernel::Point => {
                if input != output {
                    return Err(Error::Shape("1x1 convolution must preserve coordinates".into()));
                }
                for i in 0..output.len() {
                    entries.push(MapEntry { input: i as u32, tap: 0 });
                    out_ptr.push(entries.len() as u32);
                }
            }
            Kernel::Cube3 => {
                if input.stride() != output.stride() {
                    return Err(Error::Shape("3x3x3 convolution must keep the stride".into()));
                }
                let s = input.stride();
                for c in output.coords() {
                    for k in 0..27 {
                        let o = cube3_offset(k);
                        let n = [c[0] + o[0] * s, c[1] + o[1] * s, c[2] + o[2] * s];
                        if let Some(j) = input.find(&n) {
                            entries.push(MapEntry { input: j as u32, tap: k as u32 });
                        }
                    }
                    out_ptr.push(entries.len() as u32);
                }
            }
            Kernel::Down2 => {
                let s = input.stride();
                if output.stride() != 2 * s {
                    return Err(Error::Shape("downsampling output must have twice the input stride".into()));
                }
                let s2 = 2 * s;
                // Children of one parent are contiguous in Morton order.
                let mut per_out: Vec<Vec<MapEntry>> = vec![Vec::new(); output.len()];
                for (j, c) in input.coords().iter().enumerate() {
                    let p = c.map(|v| v.div_euclid(s2) * s2);
                    let i = output
                        .find(&p)
                        .ok_or_else(|| Error::Shape(format!("no output voxel for input {c:?}")))?;
                    let tap = child_index(*c, p, s);
                    per_out[i].push(MapEntry { input: j as u32, tap: tap as u32 });
                }
                for mut row in per_out {
                    row.sort_unstable_by_key(|e| e.tap);
                    entries.extend(row);
                    out_ptr.push(entries.len() as u32);
                }
            }
            Kernel::Up2 => {
                let big = input.stride();
                if big < 2 || output.stride() * 2 != big {
                    return Err(Error::Shape("generative upsampling halves the stride".into()));
                }
                let h = output.stride();
                for c in output.coords() {
                    let p = c.map(|v| v.div_euclid(big) * big);
                    if let Some(j) = input.find(&p) {
                        entries.push(MapEntry { input: j as u32, tap: child_index(*c, p, h) as u32 });
                    }
                    out_ptr.push(entries.len() as u32);
                }
            }
        }
        Ok(Self { kernel, n_in: input.len(), n_out: output.len(), out_ptr, entries })
    }
}

#[inline]
fn child_index(c: [i32; 3], parent: [i32; 3], half: i32) -> usize {
    let bx = ((c[0] - parent[0]) / half) as usize;
    let by = ((c[1] - parent[1]) / half) as usize;
    let bz = ((c[2] - parent[2]) / half) as usize;
    (bx << 2) | (by << 1) | bz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube3_offsets_cover_neighborhood() {
        assert_eq!(cube3_offset(0), [-1, -1, -1]);
        assert_eq!(cube3_offset(CUBE3_CENTER), [0, 0, 0]);
        assert_eq!(cube3_offset(26), [1, 1, 1]);
    }

    #[test]
    fn isolated_voxel_has_only_center_tap() {
        let s = CoordSet::new(vec![[0, 0, 0], [10, 10, 10]], 1).unwrap();
        let m = KernelMap::build(Kernel::Cube3, &s, &s).unwrap();
        assert_eq!(m.row(0), &[MapEntry { input: 0, tap: CUBE3_CENTER as u32 }]);
    }

    #[test]
    fn down_and_up_are_transposes() {
        let fine = CoordSet::new(vec![[0, 0, 0], [1, 0, 1], [2, 2, 2], [3, 3, 2]], 1).unwrap();
        let coarse = fine.parents();
        let down = KernelMap::build(Kernel::Down2, &fine, &coarse).unwrap();
        assert_eq!(down.n_out, 2);
        assert_eq!(down.row(0).len(), 2);
        let all = coarse.children().unwrap();
        let up = KernelMap::build(Kernel::Up2, &coarse, &all).unwrap();
        assert_eq!(up.entries.len(), 16);
        for (i, c) in all.coords().iter().enumerate() {
            if let Some(j) = fine.find(c) {
                let d = down.entries.iter().find(|e| e.input as usize == j).unwrap();
                assert_eq!(up.row(i)[0].tap, d.tap);
            }
        }
    }
}
