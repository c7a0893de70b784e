//! The network: skill embeddings, residual backbone, channel-wise patching,
//! skill-aware attention and the policy, auxiliary and value heads.

mod config;
mod network;
mod ops;
mod params;
mod predict;

pub use config::ModelConfig;
pub use network::{loss, ForwardOutput, LossTerms, Network, Sample};
pub use params::{Grads, Params, Tensor, Weights};
pub use predict::{Prediction, SkillSweep};

use thiserror::Error;

use crate::encoding::EncodingError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("skill bucket {bucket} out of range (model has {buckets})")]
    BucketOutOfRange { bucket: usize, buckets: usize },
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("no legal moves in {0}")]
    NoLegalMoves(String),
    #[error("operation requires {0}")]
    Variant(&'static str),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}
