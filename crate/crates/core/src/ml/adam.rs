//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: MlpParams,
    v: MlpParams,
    step: i32,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        let mut zero = params.clone();
        zero.weights.iter_mut().for_each(|w| w.fill(0.0));
        zero.biases.iter_mut().for_each(|b| b.fill(0.0));
        Self { m: zero.clone(), v: zero, step: 0 }
    }

    pub fn step(&self) -> i32 {
        self.step
    }
}

fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64, cfg: &AdamConfig) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
    }
}

pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    state.step += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.step);
    let c2 = 1.0 - cfg.beta2.powi(state.step);
    for i in 0..params.weights.len() {
        update(
            params.weights[i].as_mut_slice(),
            grads.weights[i].as_slice(),
            state.m.weights[i].as_mut_slice(),
            state.v.weights[i].as_mut_slice(),
            lr,
            c1,
            c2,
            cfg,
        );
        update(
            params.biases[i].as_mut_slice(),
            grads.biases[i].as_slice(),
            state.m.biases[i].as_mut_slice(),
            state.v.biases[i].as_mut_slice(),
            lr,
            c1,
            c2,
            cfg,
        );
    }
}
