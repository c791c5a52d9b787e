//! Stage-2 training with and without the teacher, and with and without
//! the transform module, on the same data and seed.

use sedd_pcc::codec::{ArchConfig, ModelParams};
use sedd_pcc::datagen::{gen_cloud, ShapeSpec};
use sedd_pcc::training::{train_stage, train_teacher, LossWeights, StageConfig, TrainOptions, TrainOutcome};

fn last(o: &TrainOutcome) -> sedd_pcc::training::LossParts {
    o.epochs.last().expect("at least one epoch").parts
}

fn main() -> sedd_pcc::Result<()> {
    let data = (0..10).map(|s| gen_cloud(&ShapeSpec::small(100 + s))).collect::<sedd_pcc::Result<Vec<_>>>()?;
    let cfg = |stage| StageConfig { stage, epochs: 3, seed: 5, ..Default::default() };
    let none = TrainOptions::default();
    let arch = ArchConfig::tiny();

    let teacher = train_teacher(&cfg(2), &data, ModelParams::new_teacher(arch.clone(), 5)?, &none)?;
    let s1 = train_stage(&cfg(1), &data, ModelParams::new_student(arch.clone(), 5)?, None, &none)?;
    let kd = train_stage(&cfg(2), &data, s1.model.clone(), Some(&teacher.model), &none)?;
    let plain = train_stage(&StageConfig { lambda_mse: 0.0, ..cfg(2) }, &data, s1.model, None, &none)?;

    let bare = ArchConfig { transform: false, ..arch };
    let b1 = train_stage(&cfg(1), &data, ModelParams::new_student(bare, 5)?, None, &none)?;
    let b2 = train_stage(&cfg(2), &data, b1.model, None, &none)?;

    let (k, p, b) = (last(&kd), last(&plain), last(&b2));
    println!("stage-2 BCE: with teacher {:.4}, without {:.4}", k.bce + k.bce2, p.bce + p.bce2);
    println!("stage-2 loss without KD term: transform {:.4}, no transform {:.4}", k.total - LossWeights::default().lambda_mse * k.kd, b.total);
    Ok(())
}
