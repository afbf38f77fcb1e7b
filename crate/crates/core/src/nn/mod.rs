//! Reusable layers. Each layer is a bundle of [`ParamId`]s into a shared
//! [`ParamStore`]; forward passes record onto a caller-supplied [`Graph`].

mod biaffine;
mod char_cnn;
mod recurrent;

pub use biaffine::{Biaffine, BiaffineKeys};
pub use char_cnn::CharCnn;
pub use recurrent::{BiRecurrent, CellKind, GruCell, LstmCell, RecurrentCell, RecurrentState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Range of the uniform initializer used for embedding tables.
pub const EMBEDDING_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub weight: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
    pub unk: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        unk: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if unk >= vocab_size {
            return Err(Error::Contract(format!(
                "unknown index {unk} outside vocabulary of {vocab_size}"
            )));
        }
        let weight = store.uniform(format!("{name}.weight"), &[vocab_size, dim], EMBEDDING_INIT, rng)?;
        Ok(EmbeddingTable {
            weight,
            vocab_size,
            dim,
            unk,
        })
    }

    /// Row lookup; indices past the vocabulary fall back to the unknown row.
    pub fn lookup(&self, g: &mut Graph, index: usize) -> Result<Var> {
        let row = if index < self.vocab_size { index } else { self.unk };
        g.lookup(self.weight, row)
    }

    /// Lookup taking a signed index, for callers holding external ids.
    pub fn lookup_signed(&self, g: &mut Graph, index: i64) -> Result<Var> {
        if index < 0 {
            return Err(Error::Index {
                what: "embedding table",
                index: index.unsigned_abs() as usize,
                len: self.vocab_size,
            });
        }
        self.lookup(g, index as usize)
    }

    pub fn set_frozen(&self, store: &mut ParamStore, frozen: bool) {
        store.get_mut(self.weight).frozen = frozen;
    }
}

/// Single affine layer followed by ELU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Result<Self> {
        Ok(Mlp {
            weight: store.glorot(format!("{name}.weight"), output, input, rng)?,
            bias: store.zeros(format!("{name}.bias"), &[output])?,
            input,
            output,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let h = g.matmul(w, x)?;
        let h = g.add(h, b)?;
        Ok(g.elu(h))
    }

    /// Applies the layer to every row of `xs` (`[n × input]`).
    pub fn forward_rows(&self, g: &mut Graph, xs: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let wt = g.transpose(w)?;
        let h = g.matmul(xs, wt)?;
        let h = g.add(h, b)?;
        Ok(g.elu(h))
    }
}

/// Dense `W x + b` without activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Linear {
            weight: store.glorot(format!("{name}.weight"), output, input, rng)?,
            bias: if bias {
                Some(store.zeros(format!("{name}.bias"), &[output])?)
            } else {
                None
            },
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(w, x)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check::{check_param_gradients, random_store};
    use crate::tensor::{Gradients, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn embedding_lookup_rows_and_unknown() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let table = EmbeddingTable::new(&mut store, "emb", 5, 3, 0, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let r2 = table.lookup(&mut g, 2).unwrap();
        assert_eq!(g.value(r2).data(), store.value(table.weight).row(2));
        let oov = table.lookup(&mut g, 99).unwrap();
        assert_eq!(g.value(oov).data(), store.value(table.weight).row(0));
        assert!(matches!(table.lookup_signed(&mut g, -1), Err(Error::Index { .. })));
    }

    #[test]
    fn embedding_shared_row_gradient_doubles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let table = EmbeddingTable::new(&mut store, "emb", 4, 2, 0, &mut rng).unwrap();
        let mut g = Graph::new(&store);
        let a = table.lookup(&mut g, 3).unwrap();
        let sa = g.sum(a);
        let mut once = Gradients::zeros(&store);
        g.backward(sa, &mut once).unwrap();

        let mut g = Graph::new(&store);
        let a = table.lookup(&mut g, 3).unwrap();
        let b = table.lookup(&mut g, 3).unwrap();
        let ab = g.add(a, b).unwrap();
        let s = g.sum(ab);
        let mut twice = Gradients::zeros(&store);
        g.backward(s, &mut twice).unwrap();
        let w = table.weight;
        for (x, y) in once.get(w).iter().zip(twice.get(w)) {
            assert_eq!(2.0 * x, *y);
        }
        assert_eq!(&twice.get(w)[6..8], &[2.0, 2.0]);
    }

    #[test]
    fn mlp_zero_and_identity_region() {
        let mut store = ParamStore::new();
        let mlp = Mlp {
            weight: store.zeros("w", &[3, 2]).unwrap(),
            bias: store.zeros("b", &[3]).unwrap(),
            input: 2,
            output: 3,
        };
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::vector(vec![0.4, -2.0]));
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

        let mut store = ParamStore::new();
        let mlp = Mlp {
            weight: store.add("w", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap()).unwrap(),
            bias: store.add("b", Tensor::vector(vec![0.1, 0.2])).unwrap(),
            input: 2,
            output: 2,
        };
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::vector(vec![1.0, 3.0]));
        let y = mlp.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).data(), &[1.1, 2.2]);
    }

    #[test]
    fn mlp_gradient_check() {
        for (seed, (i, o)) in [(1u64, (3, 4)), (2, (5, 2)), (3, (1, 6))] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (store, ids) = random_store(&[("w", &[o, i]), ("b", &[o]), ("x", &[i]), ("xs", &[3, i])], &mut rng);
            let mlp = Mlp {
                weight: ids[0],
                bias: ids[1],
                input: i,
                output: o,
            };
            let report = check_param_gradients(&store, |g| {
                let x = g.param(ids[2]);
                let y = mlp.forward(g, x)?;
                let xs = g.param(ids[3]);
                let ys = mlp.forward_rows(g, xs)?;
                let a = g.sum(y);
                let b = g.sum(ys);
                g.add(a, b)
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }
}
