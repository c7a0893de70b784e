//! Mini-batch training, the AdamW optimizer, checkpoints and the
//! finite-difference gradient check.

mod checkpoint;
mod data;
mod gradcheck;
mod optim;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use checkpoint::{
    load_checkpoint, load_params, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use data::{encode_training_example, Cursor, Dataset};
pub use gradcheck::{gradient_check, gradient_check_with, random_examples, CoordCheck, GradCheckConfig, GradCheckReport};
pub use optim::{adamw_step, AdamState, OptimizerConfig};
pub use train::{encode_dataset, top1_accuracy, train, StepLog, Trainer};

use crate::model::ModelError;
use crate::pipeline::ShardError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad training data: {0}")]
    Data(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite {what} at step {step}{}", last_good.as_ref().map(|p| format!("; last good state saved to {}", p.display())).unwrap_or_default())]
    NonFinite {
        step: u64,
        what: String,
        last_good: Option<PathBuf>,
    },
}
