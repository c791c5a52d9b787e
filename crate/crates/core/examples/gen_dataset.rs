//! Writes a small synthetic training set and prints its shape mix.
//!
//! cargo run --example gen_dataset -- [out_dir] [n]

use sedd_pcc::datagen::{gen_dataset, load_dataset, shape_histogram, DatasetOptions};

fn main() -> sedd_pcc::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "toy_data".into());
    let n: usize = args.next().map_or(20, |s| s.parse().expect("n must be an integer"));

    let opts = DatasetOptions { depth: 6, extent: 8..=12 };
    let entries = gen_dataset(n, &out, 42, &opts)?;
    for (shape, count) in shape_histogram(&entries) {
        println!("{shape:>16}: {count}");
    }
    let clouds = load_dataset(&out)?;
    let points: usize = clouds.iter().map(|c| c.len()).sum();
    println!("{} clouds, {points} points in {out}", clouds.len());
    Ok(())
}
