use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_EPOCHS: usize = 60;

/// One of the six fixed-λ operating points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    pub lambda_t: f64,
    pub lambda_a: f64,
    pub lambda_g: f64,
}

pub const RATE_POINTS: [RatePoint; 6] = [
    RatePoint { lambda_t: 0.5, lambda_a: 0.03, lambda_g: 6.0 },
    RatePoint { lambda_t: 0.25, lambda_a: 0.04, lambda_g: 4.0 },
    RatePoint { lambda_t: 0.125, lambda_a: 0.04, lambda_g: 4.0 },
    RatePoint { lambda_t: 0.05, lambda_a: 0.05, lambda_g: 8.0 },
    RatePoint { lambda_t: 0.015, lambda_a: 0.05, lambda_g: 12.0 },
    RatePoint { lambda_t: 0.005, lambda_a: 0.05, lambda_g: 20.0 },
];

pub fn rate_point(index: usize) -> Result<RatePoint> {
    RATE_POINTS
        .get(index)
        .copied()
        .ok_or_else(|| Error::Config(format!("rate point {index} outside 0..=5")))
}

/// Step-halving learning rate with a floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub halve_every: usize,
    pub floor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { initial: 8e-5, halve_every: 20, floor: 2e-5 }
    }
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.halve_every.max(1)).min(1023) as i32;
        (self.initial / 2f64.powi(halvings)).max(self.floor)
    }
}

/// `max(8e-5 / 2^⌊epoch/20⌋, 2e-5)`.
pub fn lr_schedule(epoch: usize) -> f64 {
    LrSchedule::default().at(epoch)
}

/// Loss weights shared by every stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_a: f64,
    pub lambda_g: f64,
    pub lambda_mse: f64,
    pub lambda_t: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_a: 0.03, lambda_g: 6.0, lambda_mse: 1.5, lambda_t: 0.5, alpha: 2.0 }
    }
}

impl LossWeights {
    pub fn with_rate_point(mut self, rp: RatePoint) -> Self {
        self.lambda_t = rp.lambda_t;
        self.lambda_a = rp.lambda_a;
        self.lambda_g = rp.lambda_g;
        self
    }
}

/// Everything that controls one training run; unknown JSON keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    /// 1, 2 or 3.
    pub stage: u8,
    pub lambda_a: f64,
    pub lambda_g: f64,
    pub lambda_mse: f64,
    pub lambda_t: f64,
    pub alpha: f64,
    /// Overrides `lambda_t`, `lambda_a`, `lambda_g` from the sweep table.
    pub rate_point: Option<usize>,
    pub epochs: usize,
    /// Clouds whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    /// Caps optimizer steps per epoch.
    pub steps_per_epoch: Option<usize>,
    pub lr: LrSchedule,
    pub seed: u64,
    /// Extra parameter-name prefixes held fixed on top of the stage's
    /// own trainable set.
    pub frozen: Vec<String>,
    /// Keep ground-truth voxels alongside the top-k at strides 4 and 2
    /// while training the geometry decoder.
    pub guide: bool,
    pub checkpoint_every: usize,
}

impl Default for StageConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            stage: 1,
            lambda_a: w.lambda_a,
            lambda_g: w.lambda_g,
            lambda_mse: w.lambda_mse,
            lambda_t: w.lambda_t,
            alpha: w.alpha,
            rate_point: None,
            epochs: MAX_EPOCHS,
            batch_size: 1,
            steps_per_epoch: None,
            lr: LrSchedule::default(),
            seed: 0,
            frozen: Vec::new(),
            guide: true,
            checkpoint_every: 10,
        }
    }
}

impl StageConfig {
    pub fn stage(stage: u8) -> Self {
        Self { stage, ..Default::default() }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: StageConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("stage config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_a: self.lambda_a,
            lambda_g: self.lambda_g,
            lambda_mse: self.lambda_mse,
            lambda_t: self.lambda_t,
            alpha: self.alpha,
        }
    }

    /// Weights after applying `rate_point`.
    pub fn effective_weights(&self) -> Result<LossWeights> {
        match self.rate_point {
            Some(i) => Ok(self.weights().with_rate_point(rate_point(i)?)),
            None => Ok(self.weights()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.stage) {
            return Err(Error::Config(format!("stage {} outside 1..=3", self.stage)));
        }
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return Err(Error::Config(format!("epochs {} outside 1..={MAX_EPOCHS}", self.epochs)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be at least 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        let w = self.effective_weights()?;
        let vals = [w.lambda_a, w.lambda_g, w.lambda_mse, w.lambda_t, w.alpha];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        let lr = &self.lr;
        if !(lr.initial > 0.0 && lr.floor > 0.0 && lr.floor <= lr.initial && lr.initial.is_finite()) {
            return Err(Error::Config("lr schedule needs 0 < floor <= initial".into()));
        }
        Ok(())
    }

    /// Parameter prefixes the stage updates.
    pub fn trainable_prefixes(&self) -> Vec<&'static str> {
        match self.stage {
            1 => vec!["encoder.", "entropy.", "attr_decoder."],
            2 => vec!["transform.", "geo_decoder."],
            _ => vec![""],
        }
    }
}
