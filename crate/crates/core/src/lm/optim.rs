use serde::{Deserialize, Serialize};

use super::params::{decays, ModelParams};
use crate::Scalar;

/// Fine-tuning hyperparameters. Defaults are the published GPT-2 medium
/// fine-tuning settings; desk-scale runs override the rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub adam_betas: [f64; 2],
    /// Rate at step 0 of the warmup ramp.
    pub lr_initial: f64,
    /// Rate reached at the final step.
    pub lr_min: f64,
    /// Rate at the end of warmup.
    pub lr_max: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            epochs: 60,
            warmup_steps: 500,
            weight_decay: 0.01,
            adam_eps: 1e-8,
            adam_betas: [0.7, 0.9],
            lr_initial: 1e-8,
            lr_min: 1e-5,
            lr_max: 4e-5,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        if self.lr_min > self.lr_max {
            return Err(format!("lr_min {} exceeds lr_max {}", self.lr_min, self.lr_max));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.adam_betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

/// Linear warmup from `initial` to `max` over `warmup` steps, then linear
/// decay to `min` at the last of `total` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn from_config(cfg: &TrainConfig, total: usize) -> Self {
        Self {
            initial: cfg.lr_initial,
            min: cfg.lr_min,
            max: cfg.lr_max,
            warmup: cfg.warmup_steps,
            total,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup {
            return self.initial + (self.max - self.initial) * step as f64 / self.warmup as f64;
        }
        let decay_steps = self.total.saturating_sub(self.warmup + 1);
        if decay_steps == 0 {
            return self.max;
        }
        let frac = ((step - self.warmup) as f64 / decay_steps as f64).min(1.0);
        self.max - (self.max - self.min) * frac
    }
}

/// Adam with decoupled weight decay. Biases and norm parameters are not
/// decayed.
pub struct AdamW<F> {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(params: &ModelParams<F>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<F>> = params.tensors().iter().map(|(_, t)| vec![F::zero(); t.len()]).collect();
        Self {
            beta1: cfg.adam_betas[0],
            beta2: cfg.adam_betas[1],
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let (ob1, ob2) = (F::of(1.0 - self.beta1), F::of(1.0 - self.beta2));
        let step_size = F::of(lr / bc1);
        let inv_bc2_sqrt = F::of(1.0 / bc2.sqrt());
        let eps = F::of(self.eps);
        for (((info, p), (_, g)), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let decay = if decays(&info.name) {
                F::of(lr * self.weight_decay)
            } else {
                F::zero()
            };
            for i in 0..p.len() {
                m[i] = b1 * m[i] + ob1 * g[i];
                v[i] = b2 * v[i] + ob2 * g[i] * g[i];
                p[i] -= decay * p[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() * inv_bc2_sqrt + eps);
            }
        }
    }
}
