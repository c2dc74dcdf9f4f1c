use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::rng::stream_rng;
use crate::Scalar;

/// Shape constants of the causal transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            embed_dim: 64,
            context_len: 128,
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.layers == 0 || self.heads == 0 || self.embed_dim == 0 || self.vocab_size == 0 {
            return fail("layers, heads, embed_dim and vocab_size must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "embed_dim {} is not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.context_len < 2 {
            return fail(format!("context_len {} must be at least 2", self.context_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }
}

/// Weights of one pre-norm transformer block. Matrices are row-major with
/// the input dimension first, so a projection is `x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<F> {
    pub ln1_gain: Vec<F>,
    pub ln1_bias: Vec<F>,
    pub qkv_weight: Vec<F>,
    pub qkv_bias: Vec<F>,
    pub proj_weight: Vec<F>,
    pub proj_bias: Vec<F>,
    pub ln2_gain: Vec<F>,
    pub ln2_bias: Vec<F>,
    pub fc_weight: Vec<F>,
    pub fc_bias: Vec<F>,
    pub out_weight: Vec<F>,
    pub out_bias: Vec<F>,
}

/// All model weights. The output head reuses `token_embedding`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub config: ModelConfig,
    pub token_embedding: Vec<F>,
    pub position_embedding: Vec<F>,
    pub blocks: Vec<Block<F>>,
    pub final_gain: Vec<F>,
    pub final_bias: Vec<F>,
}

/// Tensor shape and kind as listed in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Parameter groups that receive decoupled weight decay.
pub(crate) fn decays(name: &str) -> bool {
    name.ends_with("weight") || name.ends_with("embedding")
}

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.embed_dim;
        let z = |n: usize| vec![F::zero(); n];
        let block = Block {
            ln1_gain: z(d),
            ln1_bias: z(d),
            qkv_weight: z(d * 3 * d),
            qkv_bias: z(3 * d),
            proj_weight: z(d * d),
            proj_bias: z(d),
            ln2_gain: z(d),
            ln2_bias: z(d),
            fc_weight: z(d * 4 * d),
            fc_bias: z(4 * d),
            out_weight: z(4 * d * d),
            out_bias: z(d),
        };
        Ok(Self {
            config,
            token_embedding: z(config.vocab_size * d),
            position_embedding: z(config.context_len * d),
            blocks: vec![block; config.layers],
            final_gain: z(d),
            final_bias: z(d),
        })
    }

    /// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut params = Self::zeros(config)?;
        let mut rng = stream_rng(seed, 0x1417);
        let normal = Normal::new(0.0, 0.02).expect("valid normal");
        for (info, tensor) in params.tensors_mut() {
            if info.name.ends_with("gain") {
                tensor.fill(F::one());
            } else if decays(&info.name) {
                for v in tensor.iter_mut() {
                    *v = F::of(normal.sample(&mut rng));
                }
            }
        }
        Ok(params)
    }

    pub fn tensor_infos(&self) -> Vec<TensorInfo> {
        let c = &self.config;
        let d = c.embed_dim;
        let info = |name: String, shape: Vec<usize>| TensorInfo { name, shape };
        let mut out = vec![
            info("token_embedding".into(), vec![c.vocab_size, d]),
            info("position_embedding".into(), vec![c.context_len, d]),
        ];
        for l in 0..c.layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            out.extend([
                info(p("ln1.gain"), vec![d]),
                info(p("ln1.bias"), vec![d]),
                info(p("attn.qkv_weight"), vec![d, 3 * d]),
                info(p("attn.qkv_bias"), vec![3 * d]),
                info(p("attn.proj_weight"), vec![d, d]),
                info(p("attn.proj_bias"), vec![d]),
                info(p("ln2.gain"), vec![d]),
                info(p("ln2.bias"), vec![d]),
                info(p("mlp.fc_weight"), vec![d, 4 * d]),
                info(p("mlp.fc_bias"), vec![4 * d]),
                info(p("mlp.out_weight"), vec![4 * d, d]),
                info(p("mlp.out_bias"), vec![d]),
            ]);
        }
        out.push(info("final_norm.gain".into(), vec![d]));
        out.push(info("final_norm.bias".into(), vec![d]));
        out
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(TensorInfo, &[F])> {
        let mut slices: Vec<&[F]> = vec![&self.token_embedding, &self.position_embedding];
        for b in &self.blocks {
            slices.extend([
                &b.ln1_gain[..],
                &b.ln1_bias,
                &b.qkv_weight,
                &b.qkv_bias,
                &b.proj_weight,
                &b.proj_bias,
                &b.ln2_gain,
                &b.ln2_bias,
                &b.fc_weight,
                &b.fc_bias,
                &b.out_weight,
                &b.out_bias,
            ]);
        }
        slices.push(&self.final_gain);
        slices.push(&self.final_bias);
        self.tensor_infos().into_iter().zip(slices).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorInfo, &mut [F])> {
        let infos = self.tensor_infos();
        let mut slices: Vec<&mut [F]> = vec![&mut self.token_embedding, &mut self.position_embedding];
        for b in &mut self.blocks {
            slices.extend([
                &mut b.ln1_gain[..],
                &mut b.ln1_bias,
                &mut b.qkv_weight,
                &mut b.qkv_bias,
                &mut b.proj_weight,
                &mut b.proj_bias,
                &mut b.ln2_gain,
                &mut b.ln2_bias,
                &mut b.fc_weight,
                &mut b.fc_bias,
                &mut b.out_weight,
                &mut b.out_bias,
            ]);
        }
        slices.push(&mut self.final_gain);
        slices.push(&mut self.final_bias);
        infos.into_iter().zip(slices).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Converts every entry to another scalar type.
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let mut out = ModelParams::<G>::zeros(self.config).expect("config already validated");
        for ((_, src), (_, dst)) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = G::of(s.f64());
            }
        }
        out
    }
}
