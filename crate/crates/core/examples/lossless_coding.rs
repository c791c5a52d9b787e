//! Octree geometry coding and the static range coder on their own.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sedd_pcc::bitstream::{octree_decode, octree_encode, quantize_pmf, range_decode, range_encode};
use sedd_pcc::datagen::{gen_cloud, ShapeSpec};

fn main() -> sedd_pcc::Result<()> {
    let pc = gen_cloud(&ShapeSpec::small(3))?.sorted();
    let bytes = octree_encode(&pc.coords, pc.depth)?;
    assert_eq!(octree_decode(&bytes, pc.depth)?, pc.coords);
    println!("octree: {} points in {} bytes ({:.3} bits/point)", pc.len(), bytes.len(), bytes.len() as f64 * 8.0 / pc.len() as f64);

    let probs = [0.6, 0.2, 0.1, 0.05, 0.05];
    let pmf = quantize_pmf(&probs)?;
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let symbols: Vec<usize> = (0..10_000)
        .map(|_| {
            let u: f64 = r.gen();
            probs.iter().scan(0.0, |acc, p| { *acc += p; Some(*acc) }).position(|c| u < c).unwrap_or(probs.len() - 1)
        })
        .collect();
    let tables = vec![&pmf; symbols.len()];
    let coded = range_encode(&symbols, &tables)?;
    assert_eq!(range_decode(&coded, &tables)?, symbols);
    let entropy: f64 = symbols.iter().map(|&s| -probs[s].log2()).sum::<f64>() / 8.0;
    println!("range coder: {} bytes for {} symbols, empirical entropy {entropy:.0} bytes", coded.len(), symbols.len());
    Ok(())
}
