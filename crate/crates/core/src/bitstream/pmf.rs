use super::range::{RangeDecoder, RangeEncoder};
use crate::error::{Error, Result};

/// Fixed-point precision of coding tables.
pub const PMF_BITS: u32 = 16;
pub const PMF_TOTAL: u32 = 1 << PMF_BITS;

/// Static 16-bit frequency table; frequencies sum to exactly 2¹⁶ and every
/// symbol has nonzero mass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pmf16 {
    freqs: Vec<u32>,
    cum: Vec<u32>,
}

impl Pmf16 {
    pub fn from_freqs(freqs: Vec<u32>) -> Result<Self> {
        if freqs.is_empty() || freqs.iter().any(|&f| f == 0) {
            return Err(Error::Config("pmf frequencies must all be positive".into()));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        cum.push(0);
        for &f in &freqs {
            acc += f;
            cum.push(acc);
        }
        if acc != PMF_TOTAL {
            return Err(Error::Config(format!("pmf frequencies sum to {acc}, expected {PMF_TOTAL}")));
        }
        Ok(Self { freqs, cum })
    }

    pub fn alphabet(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn prob(&self, s: usize) -> f64 {
        self.freqs[s] as f64 / PMF_TOTAL as f64
    }

    pub fn encode(&self, enc: &mut RangeEncoder, s: usize) -> Result<()> {
        if s >= self.alphabet() {
            return Err(Error::Encode(format!("symbol {s} outside alphabet of size {}", self.alphabet())));
        }
        enc.encode(self.cum[s], self.freqs[s], PMF_TOTAL)
    }

    pub fn decode(&self, dec: &mut RangeDecoder) -> Result<usize> {
        let f = dec.decode_freq(PMF_TOTAL)?;
        // Last symbol whose cumulative start is <= f.
        let s = self.cum.partition_point(|&c| c <= f) - 1;
        dec.consume(self.cum[s], self.freqs[s])?;
        Ok(s)
    }
}

/// Rounds real probabilities to a [`Pmf16`] by the largest-remainder rule
/// after reserving one count per symbol.
pub fn quantize_pmf(probs: &[f64]) -> Result<Pmf16> {
    let n = probs.len();
    if n == 0 || n > PMF_TOTAL as usize {
        return Err(Error::Config(format!("cannot quantize a pmf over {n} symbols")));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config("probabilities must be finite and non-negative".into()));
    }
    let sum: f64 = probs.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Config("probabilities sum to zero".into()));
    }
    let spare = (PMF_TOTAL as usize - n) as f64;
    let mut freqs = Vec::with_capacity(n);
    let mut rem: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut used = 0u64;
    for (i, &p) in probs.iter().enumerate() {
        let x = p / sum * spare;
        let base = x.floor();
        freqs.push(1 + base as u32);
        used += base as u64;
        rem.push((x - base, i));
    }
    let left = spare as u64 - used;
    rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rem.iter().take(left as usize) {
        freqs[i] += 1;
    }
    Pmf16::from_freqs(freqs)
}

/// Range-codes a symbol sequence with one table per symbol.
pub fn range_encode(symbols: &[usize], pmfs: &[&Pmf16]) -> Result<Vec<u8>> {
    if symbols.len() != pmfs.len() {
        return Err(Error::Encode(format!("{} symbols but {} tables", symbols.len(), pmfs.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&s, p) in symbols.iter().zip(pmfs) {
        p.encode(&mut enc, s)?;
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], pmfs: &[&Pmf16]) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(bytes)?;
    pmfs.iter().map(|p| p.decode(&mut dec)).collect()
}
