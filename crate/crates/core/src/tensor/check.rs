//! Central finite-difference gradient checking.
//!
//! The relative error of one entry is `|analytic - numeric| / max(|analytic|,
//! |numeric|, 1e-5)`; the floor keeps entries whose true gradient is ~0 from
//! reporting rounding noise as a large relative error.

use rand::Rng;

use super::{Gradients, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Entries per parameter to probe; larger tensors are probed at an even stride.
    pub max_entries_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_entries_per_param: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn check_param_gradients<F>(store: &ParamStore, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    check_param_gradients_with(store, GradCheckOptions::default(), f)
}

/// Compares backward against central differences of `f` for every parameter
/// in `store`. `f` builds a scalar loss on a fresh inference graph.
pub fn check_param_gradients_with<F>(
    store: &ParamStore,
    opts: GradCheckOptions,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let mut grads = Gradients::zeros(store);
    {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss, &mut grads)?;
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let loss = f(&mut g)?;
        Ok(g.scalar(loss))
    };

    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (id, param) in store.iter() {
        let numel = param.value.numel();
        let stride = numel.div_ceil(opts.max_entries_per_param.min(numel).max(1));
        for i in (0..numel).step_by(stride.max(1)) {
            let orig = store.value(id).data()[i];
            probe.value_mut(id).data_mut()[i] = orig + opts.step;
            let up = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig - opts.step;
            let down = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let analytic = grads.get(id)[i];
            let rel = relative_error(analytic, numeric);
            report.max_abs_error = report.max_abs_error.max((analytic - numeric).abs());
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((param.name.clone(), i));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Store of uniform(-1, 1) tensors with the given names and shapes.
pub fn random_store<R: Rng>(specs: &[(&str, &[usize])], rng: &mut R) -> (ParamStore, Vec<ParamId>) {
    let mut store = ParamStore::new();
    let ids = specs
        .iter()
        .map(|(name, shape)| store.uniform(*name, shape, 1.0, rng).expect("unique names"))
        .collect();
    (store, ids)
}

/// Uniform(-1, 1) tensor, handy for building inputs in checks.
pub fn random_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..numel).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("positive shape")
}
