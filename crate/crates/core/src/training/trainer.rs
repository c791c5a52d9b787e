use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{Adam, AdamConfig};
use super::config::{LossWeights, StageConfig};
use super::loss::{loss_attribute, loss_geometry, loss_joint, loss_teacher, LossOutput, LossParts};
use crate::cloud::PointCloud;
use crate::codec::{ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::sparse::{GradMode, Gradients, Graph};

/// Where a run writes its artifacts; everything is optional.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Per-epoch CSV log.
    pub log_csv: Option<PathBuf>,
    /// Checkpoint path, rewritten every `checkpoint_every` epochs and at
    /// the end, and holding the last finite parameters after a numerical
    /// abort.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub epoch: usize,
    /// 1-based optimizer step.
    pub step: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub parts: LossParts,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub steps: Vec<StepRecord>,
    /// Per-epoch means, as written to the CSV.
    pub epochs: Vec<StepRecord>,
}

impl TrainOutcome {
    /// Mean total loss over steps `[from, to)`.
    pub fn mean_loss(&self, from: usize, to: usize) -> f64 {
        let s = &self.steps[from.min(self.steps.len())..to.min(self.steps.len())];
        s.iter().map(|r| r.parts.total).sum::<f64>() / s.len().max(1) as f64
    }
}

#[derive(Serialize)]
struct CsvRow {
    epoch: usize,
    step: usize,
    lr: f64,
    r_bits: f64,
    rate_bpp: f64,
    d_attr: f64,
    d_multi: f64,
    bce: f64,
    bce2: f64,
    kd: f64,
    total: f64,
}

impl From<&StepRecord> for CsvRow {
    fn from(r: &StepRecord) -> Self {
        let p = &r.parts;
        Self {
            epoch: r.epoch,
            step: r.step,
            lr: r.lr,
            r_bits: p.rate_bits,
            rate_bpp: p.rate,
            d_attr: p.d_attr,
            d_multi: p.d_multi,
            bce: p.bce,
            bce2: p.bce2,
            kd: p.kd,
            total: p.total,
        }
    }
}

/// Full names of the parameters a run may change.
fn trainable_names(model: &ModelParams, prefixes: &[&str], frozen: &[String]) -> Vec<String> {
    model
        .store
        .names()
        .filter(|n| prefixes.iter().any(|p| n.starts_with(p)))
        .filter(|n| !frozen.iter().any(|f| n.starts_with(f.as_str())))
        .cloned()
        .collect()
}

fn run<F>(cfg: &StageConfig, data: &[PointCloud], mut model: ModelParams, prefixes: &[&str], opts: &TrainOptions, loss_fn: F) -> Result<TrainOutcome>
where
    F: Fn(&mut Graph, &PointCloud, &ModelParams, &mut ChaCha8Rng) -> Result<LossOutput>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let names = trainable_names(&model, prefixes, &cfg.frozen);
    let mode = GradMode::Only(names);
    let mut adam = Adam::new(AdamConfig::default());
    let mut noise = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EDD_0001);
    let mut log = match &opts.log_csv {
        Some(p) => Some(csv::Writer::from_path(p)?),
        None => None,
    };
    let save = |m: &ModelParams| -> Result<()> {
        match &opts.checkpoint {
            Some(p) => m.save(p),
            None => Ok(()),
        }
    };

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr.at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut shuf = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuf.set_stream(epoch as u64 + 1);
        order.shuffle(&mut shuf);
        let limit = cfg.steps_per_epoch.unwrap_or(usize::MAX);
        let mut epoch_parts = LossParts::default();
        let mut n_steps = 0usize;
        for batch in order.chunks(cfg.batch_size).take(limit) {
            let inv = 1.0 / batch.len() as f64;
            let mut grads = Gradients::new();
            let mut parts = LossParts::default();
            for &i in batch {
                let mut g = Graph::new(mode.clone());
                let out = loss_fn(&mut g, &data[i], &model, &mut noise)?;
                parts.accumulate(&out.parts, inv);
                for (k, v) in g.backward(out.loss, &model.store)? {
                    let acc = grads.entry(k).or_insert_with(|| vec![0.0; v.len()]);
                    acc.iter_mut().zip(&v).for_each(|(a, b)| *a += inv * b);
                }
            }
            let finite = parts.total.is_finite() && grads.values().all(|v| v.iter().all(|x| x.is_finite()));
            if !finite {
                save(&model)?;
                return Err(Error::Numerical(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {}",
                    steps.len() + 1
                )));
            }
            adam.step(&mut model.store, &grads, lr, |n| mode.trains(n))?;
            if !model.store.all_finite() {
                return Err(Error::Numerical(format!("parameters diverged at step {}", steps.len() + 1)));
            }
            steps.push(StepRecord { epoch, step: steps.len() + 1, lr, parts });
            epoch_parts.accumulate(&parts, 1.0);
            n_steps += 1;
        }
        let mut mean = LossParts::default();
        mean.accumulate(&epoch_parts, 1.0 / n_steps.max(1) as f64);
        let rec = StepRecord { epoch, step: steps.len(), lr, parts: mean };
        log::info!("epoch {epoch}: lr {lr:.3e} total {:.5} rate {:.4} bpp", mean.total, mean.rate);
        if let Some(w) = log.as_mut() {
            w.serialize(CsvRow::from(&rec))?;
            w.flush()?;
        }
        epochs.push(rec);
        if (epoch + 1) % cfg.checkpoint_every == 0 {
            save(&model)?;
        }
    }
    save(&model)?;
    Ok(TrainOutcome { model, steps, epochs })
}

fn require(m: &ModelParams, kind: ModelKind, what: &str) -> Result<()> {
    if m.kind != kind {
        return Err(Error::Config(format!("{what} must be a {kind:?} checkpoint, got {:?}", m.kind)));
    }
    Ok(())
}

/// Runs stage `cfg.stage` starting from `init`.
///
/// Stage 1 updates the encoder, entropy model and attribute decoder;
/// stage 2 only the transform module and geometry decoder; stage 3
/// everything. Stage 2 needs `teacher` whenever `lambda_mse > 0` and the
/// model has a transform module.
pub fn train_stage(
    cfg: &StageConfig,
    data: &[PointCloud],
    init: ModelParams,
    teacher: Option<&ModelParams>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    require(&init, ModelKind::Student, "stage init")?;
    let w: LossWeights = cfg.effective_weights()?;
    let guide = cfg.guide;
    let prefixes = cfg.trainable_prefixes();
    match cfg.stage {
        1 => run(cfg, data, init, &prefixes, opts, |g, pc, m, rng| loss_attribute(g, pc, m, &w, rng)),
        2 => {
            let kd = w.lambda_mse > 0.0 && init.arch.transform;
            let t = match (kd, teacher) {
                (true, None) => return Err(Error::Config("stage 2 requires a teacher checkpoint".into())),
                (true, Some(t)) => {
                    require(t, ModelKind::Teacher, "teacher")?;
                    if t.arch.enc_channels != init.arch.enc_channels || t.arch.geo_channels != init.arch.geo_channels {
                        return Err(Error::Config("teacher and student architectures differ".into()));
                    }
                    Some(t)
                }
                (false, _) => None,
            };
            run(cfg, data, init, &prefixes, opts, |g, pc, m, rng| loss_geometry(g, pc, m, t, &w, guide, rng))
        }
        _ => run(cfg, data, init, &prefixes, opts, |g, pc, m, rng| loss_joint(g, pc, m, &w, guide, rng)),
    }
}

/// Trains the geometry-only teacher with `λ_G(L_BCE + L_BCE2)` plus rate.
/// Only the schedule, seed, batching, `lambda_g` and `guide` fields of
/// `cfg` are used.
pub fn train_teacher(cfg: &StageConfig, data: &[PointCloud], init: ModelParams, opts: &TrainOptions) -> Result<TrainOutcome> {
    require(&init, ModelKind::Teacher, "teacher init")?;
    let w = cfg.weights();
    let guide = cfg.guide;
    run(cfg, data, init, &["teacher."], opts, |g, pc, m, rng| loss_teacher(g, pc, m, &w, guide, rng))
}

/// Stage-3 initialization: encoder, entropy model and attribute decoder
/// from stage 1; transform module and geometry decoder from stage 2.
pub fn init_stage3(stage1: &ModelParams, stage2: &ModelParams) -> Result<ModelParams> {
    require(stage1, ModelKind::Student, "stage-1 checkpoint")?;
    require(stage2, ModelKind::Student, "stage-2 checkpoint")?;
    if stage1.arch != stage2.arch {
        return Err(Error::Config("stage-1 and stage-2 checkpoints have different architectures".into()));
    }
    let mut m = stage1.clone();
    m.store.copy_prefix_from(&stage2.store, "transform.")?;
    m.store.copy_prefix_from(&stage2.store, "geo_decoder.")?;
    Ok(m)
}
