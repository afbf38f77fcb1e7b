use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Frozen parameters receive gradients but are skipped by the optimizer.
    pub frozen: bool,
}

/// Named collection of learned tensors. Insertion order is stable and is the
/// order used by checkpoints and optimizers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value,
            frozen: false,
        });
        Ok(id)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Tensor::from_parts(shape.to_vec(), data))
    }

    /// Glorot-uniform matrix `[fan_out, fan_in]`.
    pub fn glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        fan_out: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(name, &[fan_out, fan_in], bound, rng)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Copies values from `other` for every parameter with the same name and
    /// shape. Returns the names that were not found or mismatched.
    pub fn load_from(&mut self, other: &ParamStore) -> Vec<String> {
        let mut missing = Vec::new();
        for p in &mut self.params {
            match other.id(&p.name) {
                Some(id) if other.value(id).shape() == p.value.shape() => {
                    p.value = other.value(id).clone();
                }
                _ => missing.push(p.name.clone()),
            }
        }
        missing
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    bufs: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Gradients {
            bufs: store.params.iter().map(|p| vec![0.0; p.value.numel()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    pub fn len(&self) -> usize {
        self.bufs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bufs.is_empty()
    }

    pub fn reset(&mut self) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.bufs
            .iter()
            .enumerate()
            .map(|(i, b)| (ParamId(i), b.as_slice()))
    }

    pub(crate) fn buffers_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.bufs
    }
}
