use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bd::{bd_rate_detailed, BdMethod};
use super::psnr::{d1_psnr, y_psnr};
use crate::cloud::PointCloud;
use crate::codec::{decode_full, encode_with_report, ModelParams};
use crate::error::{Error, Result};

/// One operating point; also the R-D CSV row layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub label: String,
    /// Total container bits per input point.
    pub bpp: f64,
    pub d1_psnr: f64,
    pub y_psnr: f64,
}

/// Encodes and decodes `pc` with `model` and measures the result.
pub fn rd_point(pc: &PointCloud, model: &ModelParams, label: &str) -> Result<RdPoint> {
    let (bits, _, _) = encode_with_report(pc, model)?;
    let bytes = bits.pack();
    let rec = decode_full(&crate::bitstream::Bitstream::parse(&bytes)?, model)?;
    Ok(RdPoint {
        label: label.to_string(),
        bpp: bytes.len() as f64 * 8.0 / pc.len() as f64,
        d1_psnr: d1_psnr(pc, &rec, pc.depth)?,
        y_psnr: y_psnr(pc, &rec)?,
    })
}

/// Arithmetic mean of bpp and both PSNRs.
pub fn average(points: &[RdPoint], label: &str) -> Result<RdPoint> {
    if points.is_empty() {
        return Err(Error::Metric("cannot average an empty set of R-D points".into()));
    }
    let n = points.len() as f64;
    Ok(RdPoint {
        label: label.to_string(),
        bpp: points.iter().map(|p| p.bpp).sum::<f64>() / n,
        d1_psnr: points.iter().map(|p| p.d1_psnr).sum::<f64>() / n,
        y_psnr: points.iter().map(|p| p.y_psnr).sum::<f64>() / n,
    })
}

pub fn write_rd_csv(points: &[RdPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rd_csv(path: impl AsRef<Path>) -> Result<Vec<RdPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<RdPoint>, _> = r.deserialize().collect();
    Ok(rows?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BdReport {
    pub anchor: String,
    pub test: String,
    pub bdbr_d1: f64,
    pub bdbr_y: f64,
    pub method_d1: BdMethod,
    pub method_y: BdMethod,
}

/// BD-rates of `test` against `anchor` on both quality axes.
pub fn bd_report(anchor_name: &str, anchor: &[RdPoint], test_name: &str, test: &[RdPoint]) -> Result<BdReport> {
    let d1 = |c: &[RdPoint]| c.iter().map(|p| (p.bpp, p.d1_psnr)).collect::<Vec<_>>();
    let y = |c: &[RdPoint]| c.iter().map(|p| (p.bpp, p.y_psnr)).collect::<Vec<_>>();
    let bd1 = bd_rate_detailed(&d1(anchor), &d1(test))?;
    let by = bd_rate_detailed(&y(anchor), &y(test))?;
    Ok(BdReport {
        anchor: anchor_name.to_string(),
        test: test_name.to_string(),
        bdbr_d1: bd1.percent,
        bdbr_y: by.percent,
        method_d1: bd1.method,
        method_y: by.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ArchConfig;
    use crate::datagen::{gen_cloud, ShapeSpec};

    #[test]
    fn bpp_counts_every_container_byte() {
        let pc = gen_cloud(&ShapeSpec::small(3)).unwrap();
        let m = ModelParams::new_student(ArchConfig::tiny(), 1).unwrap();
        let p = rd_point(&pc, &m, "x").unwrap();
        let (b, rep, _) = encode_with_report(&pc, &m).unwrap();
        assert_eq!(p.bpp, b.pack().len() as f64 * 8.0 / pc.len() as f64);
        assert_eq!(p.bpp, rep.bpp);
        assert_eq!(p, rd_point(&pc, &m, "x").unwrap());
    }

    #[test]
    fn csv_roundtrip_and_report() {
        let pts: Vec<RdPoint> = (0..5)
            .map(|i| RdPoint { label: format!("rp{i}"), bpp: 0.1 * 2f64.powi(i), d1_psnr: 50.0 + 3.0 * i as f64, y_psnr: 25.0 + 2.0 * i as f64 })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rd.csv");
        write_rd_csv(&pts, &p).unwrap();
        assert_eq!(read_rd_csv(&p).unwrap(), pts);
        let head = std::fs::read_to_string(&p).unwrap();
        assert!(head.starts_with("label,bpp,d1_psnr,y_psnr\n"));
        let r = bd_report("a", &pts, "a", &pts).unwrap();
        assert_eq!((r.bdbr_d1, r.bdbr_y), (0.0, 0.0));
        let avg = average(&pts[..2], "m").unwrap();
        assert!((avg.bpp - 0.15).abs() < 1e-15);
        assert!(average(&[], "m").is_err());
    }
}
