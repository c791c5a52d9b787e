use crate::cloud::{rgb_to_y8, NnIndex, PointCloud};
use crate::error::{Error, Result};

/// Reported for zero error.
pub const PSNR_CAP: f64 = 999.99;

fn non_empty(pc: &PointCloud, what: &str) -> Result<()> {
    if pc.is_empty() {
        return Err(Error::Metric(format!("{what} point cloud is empty")));
    }
    Ok(())
}

fn psnr(peak_sq: f64, mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak_sq / mse).log10()).min(PSNR_CAP)
    }
}

/// Mean squared distance from each point of `from` to its nearest point in `to`.
fn one_way(from: &PointCloud, to: &NnIndex) -> f64 {
    from.coords.iter().map(|&c| to.nearest(c).1 as f64).sum::<f64>() / from.len() as f64
}

/// Symmetric point-to-point geometry PSNR with peak `3·(2^depth − 1)²`.
pub fn d1_psnr(reference: &PointCloud, rec: &PointCloud, depth: u32) -> Result<f64> {
    non_empty(reference, "reference")?;
    non_empty(rec, "reconstructed")?;
    let p = ((1u64 << depth) - 1) as f64;
    let f = one_way(reference, &NnIndex::new(&rec.coords)?);
    let b = one_way(rec, &NnIndex::new(&reference.coords)?);
    Ok(psnr(3.0 * p * p, f.max(b)))
}

/// Luma PSNR on the 0–255 scale; every reference point is compared with
/// its nearest reconstructed point.
pub fn y_psnr(reference: &PointCloud, rec: &PointCloud) -> Result<f64> {
    non_empty(reference, "reference")?;
    non_empty(rec, "reconstructed")?;
    let nn = NnIndex::new(&rec.coords)?;
    let mse = reference
        .coords
        .iter()
        .zip(&reference.colors)
        .map(|(&c, &col)| {
            let j = nn.nearest(c).0;
            (rgb_to_y8(col) - rgb_to_y8(rec.colors[j])).powi(2)
        })
        .sum::<f64>()
        / reference.len() as f64;
    Ok(psnr(255.0 * 255.0, mse))
}

/// Y-PSNR of the predictor that paints every point with the reference's
/// mean color.
pub fn mean_color_y_psnr(reference: &PointCloud) -> Result<f64> {
    non_empty(reference, "reference")?;
    let mut flat = reference.clone();
    let m = reference.mean_color();
    flat.colors.iter_mut().for_each(|c| *c = m);
    y_psnr(reference, &flat)
}
