//! Tabular records as text, a small causal language model trained on them,
//! embeddings from its final hidden states, and clustering quality
//! assessment with silhouette-driven model selection.

pub mod cluster;
pub mod codec;
pub mod embed;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod rng;
mod scalar;
pub mod tokenizer;

pub use scalar::Scalar;

/// Model weights as stored in checkpoints.
pub type Params = lm::ModelParams<f32>;
/// Double precision weights, used for gradient checks.
pub type Params64 = lm::ModelParams<f64>;
