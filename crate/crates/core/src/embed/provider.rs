//! Client for the v1 embedding provider protocol.
//!
//! `POST {endpoint}/v1/embed` with `{"texts": [...], "pooling": "mean"}`
//! answers `{"dim": d, "embeddings": [[...], ...]}`; `GET {endpoint}/v1/health`
//! answers `{"status": "ok", "dim": d}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingMatrix, PoolingMode, Provenance};

pub const MAX_PROVIDER_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
    pub pooling: PoolingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub embeddings: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub dim: usize,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(true)
        .build()
        .into()
}

fn url(endpoint: &str, path: &str) -> String {
    format!("{}{path}", endpoint.trim_end_matches('/'))
}

pub fn provider_health(endpoint: &str, timeout: Duration) -> Result<HealthResponse, EmbedError> {
    let mut resp = agent(timeout)
        .get(&url(endpoint, "/v1/health"))
        .call()
        .map_err(|e| EmbedError::Transport {
            batch: 0,
            message: e.to_string(),
        })?;
    resp.body_mut()
        .read_json::<HealthResponse>()
        .map_err(|e| EmbedError::Malformed {
            batch: 0,
            message: e.to_string(),
        })
}

/// Embeds `records` through a provider, at most [`MAX_PROVIDER_BATCH`] texts
/// per request. Every batch must report the same dimension.
pub fn fetch_embeddings(
    endpoint: &str,
    records: &[String],
    row_ids: Vec<u64>,
    pooling: PoolingMode,
    timeout: Duration,
) -> Result<EmbeddingMatrix, EmbedError> {
    if records.is_empty() {
        return Err(EmbedError::Empty);
    }
    let agent = agent(timeout);
    let target = url(endpoint, "/v1/embed");
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    for (batch, texts) in records.chunks(MAX_PROVIDER_BATCH).enumerate() {
        let request = EmbedRequest {
            texts: texts.to_vec(),
            pooling,
        };
        let mut resp = agent
            .post(&target)
            .send_json(&request)
            .map_err(|e| EmbedError::Transport {
                batch,
                message: e.to_string(),
            })?;
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| EmbedError::Malformed {
            batch,
            message: e.to_string(),
        })?;
        if body.embeddings.len() != texts.len() {
            return Err(EmbedError::Malformed {
                batch,
                message: format!("{} embeddings for {} texts", body.embeddings.len(), texts.len()),
            });
        }
        let expected = *dim.get_or_insert(body.dim);
        if body.dim != expected {
            return Err(EmbedError::DimensionDrift {
                batch,
                expected,
                found: body.dim,
            });
        }
        for vector in &body.embeddings {
            if vector.len() != expected {
                return Err(EmbedError::DimensionDrift {
                    batch,
                    expected,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::Malformed {
                    batch,
                    message: "non-finite embedding value".into(),
                });
            }
            data.extend_from_slice(vector);
        }
    }
    EmbeddingMatrix::new(
        data,
        dim.unwrap_or(0),
        row_ids,
        Provenance::External {
            provider: endpoint.to_string(),
        },
    )
}
