use super::range::{RangeDecoder, RangeEncoder};
use crate::error::Result;

const INCREMENT: u32 = 32;
const LIMIT: u32 = 1 << 15;

/// Order-0 adaptive model over byte values.
///
/// Counts start at 1, grow by 32 per coded symbol, and are halved (never
/// below 1) once the total exceeds 2¹⁵. Encoder and decoder apply the
/// same update after every symbol, so their states never diverge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdaptiveByteModel {
    counts: [u32; 256],
    total: u32,
}

impl Default for AdaptiveByteModel {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptiveByteModel {
    pub fn new() -> Self {
        Self { counts: [1; 256], total: 256 }
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn count(&self, s: u8) -> u32 {
        self.counts[s as usize]
    }

    fn update(&mut self, s: u8) {
        self.counts[s as usize] += INCREMENT;
        self.total += INCREMENT;
        if self.total > LIMIT {
            self.total = 0;
            for c in &mut self.counts {
                *c = (*c + 1) / 2;
                self.total += *c;
            }
        }
    }

    pub fn encode(&mut self, enc: &mut RangeEncoder, s: u8) -> Result<()> {
        let cum: u32 = self.counts[..s as usize].iter().sum();
        enc.encode(cum, self.counts[s as usize], self.total)?;
        self.update(s);
        Ok(())
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder) -> Result<u8> {
        let f = dec.decode_freq(self.total)?;
        let mut cum = 0;
        let mut s = 0usize;
        while cum + self.counts[s] <= f {
            cum += self.counts[s];
            s += 1;
        }
        dec.consume(cum, self.counts[s])?;
        self.update(s as u8);
        Ok(s as u8)
    }
}
