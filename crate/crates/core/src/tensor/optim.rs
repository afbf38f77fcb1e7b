use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Scales every gradient by `max_norm / g` when the global L2 norm `g`
/// exceeds `max_norm`. Returns the factor applied (1.0 when unchanged).
pub fn clip_by_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        let factor = max_norm / norm;
        grads.scale(factor);
        factor
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplier applied to `lr` by [`Adam::decay`].
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.9,
            eps: 1e-8,
            decay: 0.75,
        }
    }
}

/// Adam with bias correction. Moment buffers are aligned with the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    lr: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Adam {
            config,
            lr: config.lr,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Multiplies the learning rate by the configured decay rate.
    pub fn decay(&mut self) {
        self.lr *= self.config.decay;
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(Error::Contract("optimizer state does not match parameters".into()));
        }
        for (id, g) in grads.iter() {
            if let Some(bad) = g.iter().find(|x| !x.is_finite()) {
                return Err(Error::Numeric {
                    param: store.get(id).name.clone(),
                    msg: format!("non-finite gradient {bad}"),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.step as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for (id, g) in grads.iter() {
            let param = store.get_mut(id);
            if param.frozen {
                continue;
            }
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (((w, &gi), mi), vi) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
