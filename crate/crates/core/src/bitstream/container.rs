//! Little-endian container for one coded cloud.
//!
//! ```text
//! "SEDD" | version u8 | depth u8 | flags u8 | points u32
//! k1 k2 k3 (LEB128) | latent channels u8
//! octree_len u32 | octree bytes | feature_len u32 | feature bytes
//! ```

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SEDD";
pub const VERSION: u8 = 1;
/// Set when the model decodes geometry straight from the latent.
pub const FLAG_NO_TRANSFORM: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub depth: u8,
    pub flags: u8,
    pub num_points: u32,
    /// Point counts at strides 4, 2 and 1.
    pub counts: [u64; 3],
    pub latent_channels: u8,
    pub octree: Vec<u8>,
    pub features: Vec<u8>,
}

pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Decode(format!("bitstream truncated at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Decode("varint longer than 64 bits".into()))
    }

    fn payload(&mut self) -> Result<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
}

pub fn read_varint(bytes: &[u8]) -> Result<(u64, usize)> {
    let mut r = Reader { data: bytes, pos: 0 };
    let v = r.varint()?;
    Ok((v, r.pos))
}

impl Bitstream {
    pub fn no_transform(&self) -> bool {
        self.flags & FLAG_NO_TRANSFORM != 0
    }

    pub fn pack(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.octree.len() + self.features.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.depth);
        out.push(self.flags);
        out.extend_from_slice(&self.num_points.to_le_bytes());
        for &k in &self.counts {
            write_varint(&mut out, k);
        }
        out.push(self.latent_channels);
        out.extend_from_slice(&(self.octree.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.octree);
        out.extend_from_slice(&(self.features.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.features);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { data: bytes, pos: 0 };
        if r.take(4).map_err(|_| Error::Format("missing magic".into()))? != MAGIC {
            return Err(Error::Format("bad magic, not a SEDD bitstream".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported bitstream version {version}")));
        }
        let depth = r.u8()?;
        let flags = r.u8()?;
        let num_points = r.u32()?;
        let counts = [r.varint()?, r.varint()?, r.varint()?];
        let latent_channels = r.u8()?;
        let octree = r.payload()?;
        let features = r.payload()?;
        if r.pos != bytes.len() {
            return Err(Error::Decode(format!("{} trailing bytes after payload", bytes.len() - r.pos)));
        }
        Ok(Self { depth, flags, num_points, counts, latent_channels, octree, features })
    }

    pub fn byte_len(&self) -> usize {
        self.pack().len()
    }
}
