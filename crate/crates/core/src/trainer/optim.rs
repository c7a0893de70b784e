use serde::{Deserialize, Serialize};

use crate::model::{Grads, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Per-step multiplicative shrink, applied independently of the learning rate.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps: u64,
    pub seed: u64,
    /// Linear warmup length in steps; 0 keeps the rate constant.
    pub warmup_steps: u64,
    /// Window, in examples, of the within-epoch shuffle.
    pub shuffle_buffer: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 8192,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps: 1000,
            seed: 0,
            warmup_steps: 0,
            shuffle_buffer: 4096,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.weight_decay) {
            return Err("weight_decay must be in [0, 1)".into());
        }
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("beta1 and beta2 must be in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("epsilon must be positive".into());
        }
        if self.shuffle_buffer == 0 {
            return Err("shuffle_buffer must be at least 1".into());
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.learning_rate
        } else {
            self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

/// Adaptive moment estimates, stored at parameter precision.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &Params) -> AdamState {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update: `p <- p * (1 - wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
/// Tensors for which `frozen` returns true are left untouched.
pub fn adamw_step(
    params: &mut Params,
    grads: &Grads,
    state: &mut AdamState,
    cfg: &OptimizerConfig,
    lr: f64,
    frozen: impl Fn(&str) -> bool,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let shrink = 1.0 - cfg.weight_decay;
    for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
        if frozen(&tensor.name) {
            continue;
        }
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads.data[i]);
        for j in 0..tensor.data.len() {
            let mj = cfg.beta1 * m[j] as f64 + (1.0 - cfg.beta1) * g[j];
            let vj = cfg.beta2 * v[j] as f64 + (1.0 - cfg.beta2) * g[j] * g[j];
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.epsilon);
            tensor.data[j] = (tensor.data[j] as f64 * shrink - update) as f32;
        }
    }
}
