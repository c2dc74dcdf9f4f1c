//! Checkpoint layout: `u32` little-endian header length, the JSON header,
//! then every tensor as little-endian `f32` in declared order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams, TensorInfo};
use super::ModelError;
use crate::Scalar;

pub const CHECKPOINT_FORMAT: &str = "erasmo-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    pub tensors: Vec<TensorInfo>,
}

pub fn write_checkpoint<F: Scalar, W: Write>(mut out: W, params: &ModelParams<F>, seed: u64) -> Result<(), ModelError> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        seed,
        config: params.config,
        tensors: params.tensor_infos(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    for (_, tensor) in params.tensors() {
        let mut buf = Vec::with_capacity(tensor.len() * 4);
        for &v in tensor {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(CheckpointHeader, ModelParams<f32>), ModelError> {
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            header.format, header.version
        )));
    }
    let mut params = ModelParams::<f32>::zeros(header.config)?;
    if params.tensor_infos() != header.tensors {
        return Err(ModelError::Checkpoint("tensor table does not match config".into()));
    }
    for (_, tensor) in params.tensors_mut() {
        let mut buf = vec![0u8; tensor.len() * 4];
        input.read_exact(&mut buf)?;
        for (v, bytes) in tensor.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(bytes.try_into().expect("4-byte chunk"));
        }
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(ModelError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let cfg = ModelConfig {
            vocab_size: 270,
            embed_dim: 8,
            heads: 2,
            layers: 1,
            context_len: 8,
            dropout: 0.1,
        };
        let params = ModelParams::<f32>::init(cfg, 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params, 9).unwrap();
        let (header, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(header.seed, 9);
        assert_eq!(back, params);
        buf.push(0);
        assert!(read_checkpoint(buf.as_slice()).is_err());
        assert!(read_checkpoint(&buf[..buf.len() - 10]).is_err());
    }
}
