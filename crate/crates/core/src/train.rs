//! Minibatch training loop shared by both pipelines.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{clip_by_global_norm, Adam, AdamConfig, Gradients, Graph, ParamStore, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm bound; non-positive disables clipping.
    pub clip: f64,
    /// Epochs without dev improvement before the learning rate decays.
    pub patience: usize,
    /// L2 strength, applied as `λ·θ` added to every gradient.
    pub l2: f64,
    pub seed: u64,
    /// Stop once the primary dev metric reaches this value.
    pub target_primary: Option<f64>,
    /// Together with `target_primary`, the secondary dev metric must reach this.
    pub target_secondary: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            adam: AdamConfig::default(),
            clip: 5.0,
            patience: 5,
            l2: 0.0,
            seed: 1,
            target_primary: None,
            target_secondary: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("L2 strength must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn reached(&self, primary: f64, secondary: f64) -> bool {
        match (self.target_primary, self.target_secondary) {
            (None, None) => false,
            (p, s) => p.is_none_or(|p| primary >= p) && s.is_none_or(|s| secondary >= s),
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    pub metrics: Vec<(String, f64)>,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} loss={:.6} lr={:.6e}", self.epoch, self.loss, self.lr)?;
        for (k, v) in &self.metrics {
            write!(f, " {k}={v:.4}")?;
        }
        Ok(())
    }
}

pub trait HasParams {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

/// Optimizer state carried across epochs.
pub struct Trainer {
    pub config: TrainConfig,
    pub adam: Adam,
    pub rng: ChaCha8Rng,
    pub updates: usize,
    bad_epochs: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, store: &ParamStore) -> Result<Self> {
        use rand::SeedableRng;
        config.validate()?;
        Ok(Trainer {
            adam: Adam::new(config.adam, store),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            updates: 0,
            bad_epochs: 0,
        })
    }

    /// One pass over `count` examples in shuffled minibatches. The loss of a
    /// batch is the mean of its example losses. Returns the mean example loss.
    pub fn epoch<M, F>(&mut self, model: &mut M, count: usize, loss: F) -> Result<f64>
    where
        M: HasParams,
        F: Fn(&M, &mut Graph, usize) -> Result<Var>,
    {
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut self.rng);
        let mut grads = Gradients::zeros(model.params());
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            grads.reset();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let seed: u64 = self.rng.gen();
                let mut g = Graph::training(model.params(), seed);
                let l = loss(model, &mut g, i)?;
                let value = g.scalar(l);
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        step: self.updates,
                        loss: value,
                    });
                }
                total += value;
                let scaled = g.scale(l, scale);
                g.backward(scaled, &mut grads)?;
            }
            if self.config.l2 > 0.0 {
                let store = model.params();
                for (id, p) in store.iter() {
                    let lam = self.config.l2;
                    for (gv, &v) in grads.get_mut(id).iter_mut().zip(p.value.data()) {
                        *gv += lam * v;
                    }
                }
            }
            if self.config.clip > 0.0 {
                clip_by_global_norm(&mut grads, self.config.clip);
            }
            self.adam.step(model.params_mut(), &grads)?;
            self.updates += 1;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// Records whether the dev metric improved; decays the learning rate after
    /// `patience` epochs without improvement.
    pub fn observe(&mut self, improved: bool) {
        if improved {
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.config.patience.max(1) {
                self.adam.decay();
                self.bad_epochs = 0;
            }
        }
    }
}

/// Lexicographic comparison used for model selection.
pub(crate) fn better(a: (f64, f64), b: Option<(f64, f64)>) -> bool {
    match b {
        None => true,
        Some(b) => a.0 > b.0 || (a.0 == b.0 && a.1 > b.1),
    }
}
