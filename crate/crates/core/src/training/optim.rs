//! Adam with decoupled weight decay and a warmup / linear-decay schedule.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::encoder::{Gradients, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Biases, LayerNorm scales and shifts are not decayed.
pub fn decays(name: &str) -> bool {
    !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"))
}

#[derive(Debug, Clone)]
pub struct AdamW {
    config: AdamConfig,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamConfig, params: &ParameterSet) -> Self {
        Self {
            config,
            m: params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
            v: params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
            decay: params.iter().map(|p| decays(&p.name)).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every trainable tensor. Frozen tensors are untouched.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &Gradients, lr: f64) {
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (id, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let wd = if self.decay[id] { weight_decay } else { 0.0 };
            Zip::from(&mut p.value)
                .and(&grads.tensors[id])
                .and(&mut self.m[id])
                .and(&mut self.v[id])
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *w -= lr * (update + wd * *w);
                });
        }
    }
}

/// Learning rate at 1-based `step`: linear warmup to `base` over `warmup`
/// steps, then linear decay that reaches `base / (total - warmup)` on the
/// last step.
pub fn lr_at(step: usize, base: f64, warmup: usize, total: usize) -> f64 {
    if step == 0 {
        return 0.0;
    }
    if step <= warmup {
        return base * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return base;
    }
    let remaining = total.saturating_sub(step) + 1;
    base * remaining as f64 / (total - warmup) as f64
}
