use std::path::Path;

use super::config::{LrSchedule, StageConfig, MAX_EPOCHS};
use super::trainer::{init_stage3, train_stage, train_teacher, TrainOptions, TrainOutcome};
use crate::cloud::PointCloud;
use crate::codec::{ArchConfig, ModelParams};
use crate::error::Result;

/// Teacher plus the three student stages, each with its own config.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub arch: ArchConfig,
    /// Seed for the fresh teacher and student weights.
    pub init_seed: u64,
    pub teacher: StageConfig,
    pub stages: [StageConfig; 3],
}

impl PipelineConfig {
    /// Full-length schedule at one rate point.
    pub fn standard(rate_point: usize, seed: u64) -> Self {
        let mk = |stage| StageConfig { stage, rate_point: Some(rate_point), seed, ..Default::default() };
        Self { arch: ArchConfig::default(), init_seed: seed, teacher: mk(2), stages: [mk(1), mk(2), mk(3)] }
    }

    /// Short schedule for the synthetic toy set: a constant learning rate
    /// of 1e-3 and 6 / 40 / 8 / 25 epochs for teacher and stages 1 to 3.
    pub fn toy(rate_point: usize, seed: u64) -> Self {
        let mut c = Self::standard(rate_point, seed);
        let lr = LrSchedule { initial: 1e-3, halve_every: MAX_EPOCHS, floor: 1e-3 };
        for (s, epochs) in std::iter::once(&mut c.teacher).chain(c.stages.iter_mut()).zip([6, 40, 8, 25]) {
            s.epochs = epochs;
            s.lr = lr.clone();
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub teacher: TrainOutcome,
    pub stages: [TrainOutcome; 3],
}

impl PipelineOutcome {
    pub fn model(&self) -> &ModelParams {
        &self.stages[2].model
    }
}

fn options(dir: Option<&Path>, name: &str) -> TrainOptions {
    match dir {
        Some(d) => TrainOptions {
            log_csv: Some(d.join(format!("{name}.csv"))),
            checkpoint: Some(d.join(format!("{name}.ckpt"))),
        },
        None => TrainOptions::default(),
    }
}

/// Trains the teacher, then stages 1, 2 and 3 in order. With `dir`, each
/// run leaves `<name>.ckpt` and `<name>.csv` there.
pub fn run_pipeline(cfg: &PipelineConfig, data: &[PointCloud], dir: Option<&Path>) -> Result<PipelineOutcome> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let teacher = train_teacher(&cfg.teacher, data, ModelParams::new_teacher(cfg.arch.clone(), cfg.init_seed)?, &options(dir, "teacher"))?;
    let student = ModelParams::new_student(cfg.arch.clone(), cfg.init_seed)?;
    let s1 = train_stage(&cfg.stages[0], data, student, None, &options(dir, "stage1"))?;
    let s2 = train_stage(&cfg.stages[1], data, s1.model.clone(), Some(&teacher.model), &options(dir, "stage2"))?;
    let init = init_stage3(&s1.model, &s2.model)?;
    let s3 = train_stage(&cfg.stages[2], data, init, None, &options(dir, "stage3"))?;
    Ok(PipelineOutcome { teacher, stages: [s1, s2, s3] })
}
