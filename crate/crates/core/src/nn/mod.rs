//! The force-correction network: a small fully-connected ReLU regressor from
//! sensor readings to the body-frame force gap, and its training loop.

pub mod adam;
pub mod mlp;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use mlp::{mlp_forward, mlp_gradient, mlp_loss, Dense, MlpParams};
pub use train::{
    correction_targets, grid_search, lr_schedule, predict_corrected, train, Corrector, EpochRecord,
    GridOutcome, GridSpec, Normalization, TrainConfig, TrainOutcome, TrainingLog, TrialRecord,
};
