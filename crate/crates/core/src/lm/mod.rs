//! Small decoder-only transformer trained on next-token prediction.
//!
//! Pre-norm residual blocks with GELU MLPs, learned positions and an output
//! head tied to the token embedding. Everything is generic over [`Scalar`]
//! so the same code runs in `f32` for training and in `f64` for gradient
//! checks.
//!
//! [`Scalar`]: crate::Scalar

mod checkpoint;
mod model;
mod optim;
mod params;
mod train;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{forward, generate, gradient, hidden_states, loss, softmax_in_place, ForwardOutput, TokenBatch};
pub use optim::{AdamW, LrSchedule, TrainConfig};
pub use params::{Block, ModelConfig, ModelParams, TensorInfo};
pub use train::{train, write_trace, EpochCorpus, PerEpoch, TraceRow, TrainOutcome};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds the limit of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocabulary {vocab}")]
    InvalidToken { id: u32, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch has no prediction targets")]
    EmptyBatch,
    #[error("training produced non-finite parameters")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
