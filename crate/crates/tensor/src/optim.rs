use serde::{Deserialize, Serialize};

use crate::params::{ParamGrads, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are allocated lazily per parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update. Parameters without a gradient entry are skipped
    /// entirely: their moments do not decay and their values do not move.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        let n = params.len();
        self.first.resize(n, None);
        self.second.resize(n, None);
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (id, g) in grads.iter() {
            let p = params.get_mut(id);
            let m = self.first[id.0].get_or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let v = self.second[id.0].get_or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            for k in 0..g.len() {
                let gk = g.data()[k];
                let mk = beta1 * m.data()[k] + (1.0 - beta1) * gk;
                let vk = beta2 * v.data()[k] + (1.0 - beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                p.data_mut()[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Rescales all gradients uniformly so their global L2 norm is at most
/// `max_norm`. Returns the factor applied (1.0 when untouched).
pub fn clip_gradients(grads: &mut ParamGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    // The slack keeps a second application from rescaling by a factor a
    // rounding error below one.
    if norm <= max_norm * (1.0 + 1e-12) || norm == 0.0 {
        return 1.0;
    }
    let factor = max_norm / norm;
    grads.scale(factor);
    factor
}
