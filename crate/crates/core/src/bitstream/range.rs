//! 32-bit carry-less range coder (Subbotin style).
//!
//! Renormalization shifts out the top byte once it can no longer change;
//! when the interval straddles a byte boundary while too narrow, the range
//! is cut back to the boundary instead of propagating a carry.

use crate::error::{Error, Result};

const TOP: u32 = 1 << 24;
const BOT: u32 = 1 << 16;

/// Largest frequency total the coder accepts.
pub const MAX_TOTAL: u32 = BOT;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u32,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self { low: 0, range: u32::MAX, out: Vec::new() }
    }

    /// Encodes the interval `[cum, cum + freq)` out of `total`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) -> Result<()> {
        if freq == 0 || total == 0 || total > MAX_TOTAL || cum + freq > total {
            return Err(Error::Encode(format!("invalid interval cum={cum} freq={freq} total={total}")));
        }
        let r = self.range / total;
        self.low = self.low.wrapping_add(r * cum);
        self.range = r * freq;
        self.normalize();
        Ok(())
    }

    fn normalize(&mut self) {
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
            self.range <<= 8;
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..4 {
            self.out.push((self.low >> 24) as u8);
            self.low <<= 8;
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    low: u32,
    range: u32,
    code: u32,
    r: u32,
    data: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        if data.len() < 4 {
            return Err(Error::Decode("range-coded stream shorter than 4 bytes".into()));
        }
        let code = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
        Ok(Self { low: 0, range: u32::MAX, code, r: 0, data, pos: 4 })
    }

    /// First half of a decode step: the cumulative frequency of the next symbol.
    pub fn decode_freq(&mut self, total: u32) -> Result<u32> {
        if total == 0 || total > MAX_TOTAL {
            return Err(Error::Decode(format!("invalid frequency total {total}")));
        }
        self.r = self.range / total;
        let v = self.code.wrapping_sub(self.low) / self.r;
        Ok(v.min(total - 1))
    }

    /// Second half of a decode step, with the interval of the decoded symbol.
    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        self.low = self.low.wrapping_add(self.r * cum);
        self.range = self.r * freq;
        loop {
            if (self.low ^ self.low.wrapping_add(self.range)) >= TOP {
                if self.range >= BOT {
                    break;
                }
                self.range = self.low.wrapping_neg() & (BOT - 1);
            }
            let byte = *self
                .data
                .get(self.pos)
                .ok_or_else(|| Error::Decode("range-coded stream exhausted".into()))?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.low <<= 8;
            self.range <<= 8;
        }
        Ok(())
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}
