//! Teacher plus the three training stages on a handful of synthetic cubes.
//!
//! Uses the tiny architecture and two epochs per run so it finishes in
//! seconds; checkpoints and CSV logs land in `train_out/`.

use sedd_pcc::codec::ArchConfig;
use sedd_pcc::datagen::{gen_cloud, ShapeSpec};
use sedd_pcc::training::{run_pipeline, PipelineConfig};

fn main() -> sedd_pcc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = (0..12).map(|s| gen_cloud(&ShapeSpec::small(s))).collect::<sedd_pcc::Result<Vec<_>>>()?;

    let mut cfg = PipelineConfig::toy(0, 1);
    cfg.arch = ArchConfig::tiny();
    for s in std::iter::once(&mut cfg.teacher).chain(cfg.stages.iter_mut()) {
        s.epochs = 2;
    }
    let out = run_pipeline(&cfg, &data, Some("train_out".as_ref()))?;
    for (name, run) in [("teacher", &out.teacher), ("stage 1", &out.stages[0]), ("stage 2", &out.stages[1]), ("stage 3", &out.stages[2])] {
        let first = run.epochs.first().map_or(f64::NAN, |e| e.parts.total);
        let last = run.epochs.last().map_or(f64::NAN, |e| e.parts.total);
        println!("{name}: {} steps, epoch loss {first:.3} -> {last:.3}", run.steps.len());
    }
    Ok(())
}
