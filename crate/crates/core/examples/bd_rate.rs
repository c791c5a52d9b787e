//! BD-rate between two R-D curves, and the CSV round trip used by the
//! `rdcurve` / `bdrate` commands.

use sedd_pcc::metrics::{bd_report, read_rd_csv, write_rd_csv, RdPoint};

fn curve(scale: f64) -> Vec<RdPoint> {
    (0..6)
        .map(|i| {
            let bpp = 0.05 * 1.8f64.powi(i);
            RdPoint { label: format!("rp{i}"), bpp: bpp * scale, d1_psnr: 52.0 + 6.0 * bpp.log10(), y_psnr: 30.0 + 4.0 * bpp.log10() }
        })
        .collect()
}

fn main() -> sedd_pcc::Result<()> {
    let anchor = curve(1.0);
    let test = curve(0.8);
    let dir = std::env::temp_dir().join("sedd_bd_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("anchor.csv");
    write_rd_csv(&anchor, &path)?;
    let back = read_rd_csv(&path)?;

    let report = bd_report("anchor", &back, "test", &test)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
