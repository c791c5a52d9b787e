//! Losses, optimizer and the three-stage training protocol.

mod adam;
mod config;
mod loss;
mod pipeline;
mod trainer;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use config::{lr_schedule, rate_point, LossWeights, LrSchedule, RatePoint, StageConfig, MAX_EPOCHS, RATE_POINTS};
pub use loss::{
    bce_occupancy, bidirectional_mse, loss_attribute, loss_geometry, loss_joint, loss_teacher, teacher_features,
    teacher_reconstruct, LossKind, LossOutput, LossParts,
};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutcome};
pub use trainer::{init_stage3, train_stage, train_teacher, StepRecord, TrainOptions, TrainOutcome};

#[cfg(test)]
mod tests;
