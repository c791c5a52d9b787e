//! Geometry and color PSNRs, R-D points and BD-rate.

mod bd;
mod psnr;
mod rd;

pub use bd::{bd_rate, bd_rate_detailed, BdMethod, BdOutcome};
pub use psnr::{d1_psnr, mean_color_y_psnr, y_psnr, PSNR_CAP};
pub use rd::{average, bd_report, rd_point, read_rd_csv, write_rd_csv, BdReport, RdPoint};
