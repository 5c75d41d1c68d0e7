//! MLP scorer, Adam, the training loop and evaluation.

mod adam;
pub mod checkpoint;
mod mlp;
mod train;

pub use adam::Adam;
pub use mlp::{Mlp, MlpConfig};
pub use train::{
    evaluate, predict_group, query_loss, query_loss_and_grads, train, EpochRecord, TempSchedule, TrainConfig,
    TrainReport, TAU_FLOOR,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("feature width mismatch: model expects {expected}, data has {got}")]
    Width { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no training queries")]
    EmptyData,
    #[error(
        "non-finite {what} at epoch {epoch}, step {step} (tau = {tau}); \
         low temperatures produce exploding gradients, try a larger --tau"
    )]
    NonFinite {
        what: &'static str,
        epoch: usize,
        step: u64,
        tau: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] crate::error::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<crate::autodiff::AutodiffError> for ModelError {
    fn from(e: crate::autodiff::AutodiffError) -> Self {
        ModelError::Loss(e.into())
    }
}
