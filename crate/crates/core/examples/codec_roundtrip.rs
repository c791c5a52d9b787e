//! Encodes a synthetic cloud to a bitstream, decodes it and reports the
//! payload split and quality. An untrained model is used, so expect poor
//! colors; pass a checkpoint path to use trained weights.

use sedd_pcc::codec::{decode_full, encode_with_report, ArchConfig, ModelParams};
use sedd_pcc::datagen::{gen_cloud, ShapeSpec};
use sedd_pcc::metrics::{d1_psnr, mean_color_y_psnr, y_psnr};

fn main() -> sedd_pcc::Result<()> {
    let model = match std::env::args().nth(1) {
        Some(p) => ModelParams::load(p)?,
        None => ModelParams::new_student(ArchConfig::default(), 0)?,
    };
    let pc = gen_cloud(&ShapeSpec::small(9))?;
    let (bits, report, _) = encode_with_report(&pc, &model)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));

    let rec = decode_full(&sedd_pcc::bitstream::Bitstream::parse(&bits.pack())?, &model)?;
    println!("decoded {} of {} points", rec.len(), pc.len());
    println!("D1 {:.2} dB, Y {:.2} dB (mean-color baseline {:.2} dB)", d1_psnr(&pc, &rec, pc.depth)?, y_psnr(&pc, &rec)?, mean_color_y_psnr(&pc)?);
    Ok(())
}
