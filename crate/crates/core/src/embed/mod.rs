//! Record embeddings pooled from the model's final hidden states, plus the
//! exchange formats for externally produced embeddings.

mod file;
mod provider;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use file::{load_embeddings, read_embeddings, save_embeddings, write_embeddings, ERSM_MAGIC, ERSM_VERSION};
pub use provider::{
    fetch_embeddings, provider_health, EmbedRequest, EmbedResponse, HealthResponse, MAX_PROVIDER_BATCH,
};

use crate::lm::{hidden_states, ModelError, ModelParams, TokenBatch};
use crate::tokenizer::{tokenize, Vocabulary};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no records to embed")]
    Empty,
    #[error("embedding matrix contains a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported embedding file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("not an embedding file: {0}")]
    Format(String),
    #[error("batch {batch}: transport error: {message}")]
    Transport { batch: usize, message: String },
    #[error("batch {batch}: malformed provider response: {message}")]
    Malformed { batch: usize, message: String },
    #[error("batch {batch}: embedding dimension drifted from {expected} to {found}")]
    DimensionDrift {
        batch: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// How per-token hidden states collapse into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Mean over non-PAD positions.
    #[default]
    Mean,
    /// Hidden state at the last non-PAD position.
    LastToken,
}

impl PoolingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMode::Mean => "mean",
            PoolingMode::LastToken => "last_token",
        }
    }
}

impl std::str::FromStr for PoolingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(PoolingMode::Mean),
            "last_token" => Ok(PoolingMode::LastToken),
            other => Err(format!("unknown pooling `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Internal { model_id: String, pooling: PoolingMode },
    External { provider: String },
}

/// Row-major `n × d` matrix of finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f32>,
    rows: usize,
    dim: usize,
    row_ids: Vec<u64>,
    provenance: Provenance,
}

impl EmbeddingMatrix {
    pub fn new(data: Vec<f32>, dim: usize, row_ids: Vec<u64>, provenance: Provenance) -> Result<Self, EmbedError> {
        let rows = row_ids.len();
        if rows == 0 || dim == 0 {
            return Err(EmbedError::Empty);
        }
        if data.len() != rows * dim {
            return Err(EmbedError::Shape(format!(
                "{} values for {rows} rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { row: pos / dim });
        }
        Ok(Self {
            data,
            rows,
            dim,
            row_ids,
            provenance,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Copy as an `n × d` array of another scalar type.
    pub fn to_array<F: Scalar>(&self) -> Array2<F> {
        Array2::from_shape_fn((self.rows, self.dim), |(i, j)| {
            F::of(f64::from(self.data[i * self.dim + j]))
        })
    }
}

/// Short content hash identifying a parameter set.
pub fn model_id<F: Scalar>(params: &ModelParams<F>) -> String {
    let mut hasher = Sha256::new();
    for (_, tensor) in params.tensors() {
        for &v in tensor {
            hasher.update((v.f64() as f32).to_le_bytes());
        }
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Pools hidden states for already tokenized sequences. Sequences are
/// grouped into batches of `batch_size`; the result does not depend on it.
pub fn embed_token_sequences<F: Scalar>(
    params: &ModelParams<F>,
    sequences: &[Vec<u32>],
    pad: Option<u32>,
    pooling: PoolingMode,
    batch_size: usize,
) -> Result<Vec<f32>, EmbedError> {
    if sequences.is_empty() {
        return Err(EmbedError::Empty);
    }
    let d = params.config.embed_dim;
    let mut out = Vec::with_capacity(sequences.len() * d);
    for chunk in sequences.chunks(batch_size.max(1)) {
        let batch = TokenBatch::new(chunk, pad)?;
        let hidden = hidden_states(params, &batch)?;
        let t_len = batch.seq_len();
        for (b, seq) in chunk.iter().enumerate() {
            let len = seq.len();
            if len == 0 {
                return Err(EmbedError::Shape(format!("sequence {b} is empty")));
            }
            let rows = &hidden[b * t_len * d..(b * t_len + len) * d];
            match pooling {
                PoolingMode::Mean => {
                    let mut acc = vec![0.0f64; d];
                    for row in rows.chunks_exact(d) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += v.f64();
                        }
                    }
                    out.extend(acc.iter().map(|&a| (a / len as f64) as f32));
                }
                PoolingMode::LastToken => {
                    out.extend(rows[(len - 1) * d..].iter().map(|v| v.f64() as f32));
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of [`embed_records`].
pub struct Embedded {
    pub matrix: EmbeddingMatrix,
    /// Records cut to the model's context length.
    pub truncated: usize,
}

/// Tokenizes each record (BOS … EOS), truncates the tail beyond the context
/// length, and pools the final hidden states. Row `i` belongs to record `i`.
pub fn embed_records<F: Scalar>(
    params: &ModelParams<F>,
    vocab: &Vocabulary,
    records: &[String],
    row_ids: Vec<u64>,
    pooling: PoolingMode,
    batch_size: usize,
) -> Result<Embedded, EmbedError> {
    if records.is_empty() {
        return Err(EmbedError::Empty);
    }
    if row_ids.len() != records.len() {
        return Err(EmbedError::Shape(format!(
            "{} row ids for {} records",
            row_ids.len(),
            records.len()
        )));
    }
    let max = params.config.context_len;
    let mut truncated = 0;
    let sequences: Vec<Vec<u32>> = records
        .iter()
        .map(|r| {
            let mut ids = tokenize(vocab, r).ids;
            if ids.len() > max {
                ids.truncate(max);
                truncated += 1;
            }
            ids
        })
        .collect();
    if truncated > 0 {
        log::warn!("{truncated} of {} records truncated to {max} tokens", records.len());
    }
    let data = embed_token_sequences(params, &sequences, Some(vocab.specials().pad), pooling, batch_size)?;
    let matrix = EmbeddingMatrix::new(
        data,
        params.config.embed_dim,
        row_ids,
        Provenance::Internal {
            model_id: model_id(params),
            pooling,
        },
    )?;
    Ok(Embedded { matrix, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::External {
            provider: "test".into(),
        }
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(matches!(
            EmbeddingMatrix::new(vec![], 2, vec![], prov()),
            Err(EmbedError::Empty)
        ));
        assert!(matches!(
            EmbeddingMatrix::new(vec![1.0; 3], 2, vec![0, 1], prov()),
            Err(EmbedError::Shape(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(vec![1.0, 2.0, f32::NAN, 0.0], 2, vec![0, 1], prov()),
            Err(EmbedError::NonFinite { row: 1 })
        ));
    }

    #[test]
    fn pooling_names() {
        assert_eq!("last_token".parse::<PoolingMode>().unwrap(), PoolingMode::LastToken);
        assert_eq!(PoolingMode::Mean.as_str(), "mean");
        assert_eq!(
            serde_json::to_string(&PoolingMode::LastToken).unwrap(),
            "\"last_token\""
        );
    }
}
