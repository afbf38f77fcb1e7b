use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Biaffine scorer with ELU input projections:
/// `s_o = g1(d)ᵀ W_o g2(h) + U_o g1(d) + V_o g2(h) + b_o` for each output `o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biaffine {
    pub g1: Mlp,
    pub g2: Mlp,
    /// `[outputs·a1 × a2]`: output `o` occupies rows `o·a1 .. (o+1)·a1`.
    pub w: ParamId,
    pub u: ParamId,
    pub v: ParamId,
    pub b: ParamId,
    pub outputs: usize,
    /// Dropout applied to both projected inputs during training.
    pub dropout: f64,
}

/// Candidate-side projections for a fixed set of keys, computed once and
/// reused by every query against the same keys.
#[derive(Debug, Clone, Copy)]
pub struct BiaffineKeys {
    /// `[n × a2]`
    pub projected: Var,
    /// `V g2(h_i)` for each key, `[n]`; only for single-output scorers.
    pub linear: Option<Var>,
    /// `g2(H) Wᵀ` = per-key left vectors `[n × a1]`; only for single-output scorers.
    pub left: Option<Var>,
    pub len: usize,
}

impl Biaffine {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        left_in: usize,
        right_in: usize,
        hidden: usize,
        outputs: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let g1 = Mlp::new(store, &format!("{name}.g1"), left_in, hidden, rng)?;
        let g2 = Mlp::new(store, &format!("{name}.g2"), right_in, hidden, rng)?;
        let bound = (6.0 / (2 * hidden) as f64).sqrt();
        Ok(Biaffine {
            g1,
            g2,
            w: store.uniform(format!("{name}.w"), &[outputs * hidden, hidden], bound, rng)?,
            u: store.glorot(format!("{name}.u"), outputs, hidden, rng)?,
            v: store.glorot(format!("{name}.v"), outputs, hidden, rng)?,
            b: store.zeros(format!("{name}.b"), &[outputs])?,
            outputs,
            dropout,
        })
    }

    pub fn project_left(&self, g: &mut Graph, d: Var) -> Result<Var> {
        let x = self.g1.forward(g, d)?;
        g.dropout(x, self.dropout)
    }

    pub fn project_right(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let x = self.g2.forward(g, h)?;
        g.dropout(x, self.dropout)
    }

    /// Scores for already-projected inputs, `[outputs]`.
    pub fn bilinear(&self, g: &mut Graph, x1: Var, x2: Var) -> Result<Var> {
        let a1 = self.g1.output;
        let w = g.param(self.w);
        let t = g.matmul(w, x2)?;
        let t = g.reshape(t, &[self.outputs, a1])?;
        let bil = g.matmul(t, x1)?;
        let u = g.param(self.u);
        let ux = g.matmul(u, x1)?;
        let v = g.param(self.v);
        let vx = g.matmul(v, x2)?;
        let b = g.param(self.b);
        let s = g.add(bil, ux)?;
        let s = g.add(s, vx)?;
        g.add(s, b)
    }

    /// Full scorer for one `(d, h)` pair, `[outputs]`.
    pub fn score(&self, g: &mut Graph, d: Var, h: Var) -> Result<Var> {
        let x1 = self.project_left(g, d)?;
        let x2 = self.project_right(g, h)?;
        self.bilinear(g, x1, x2)
    }

    /// Projects every row of `keys` (`[n × right_in]`) through `g2`.
    pub fn prepare_keys(&self, g: &mut Graph, keys: Var) -> Result<BiaffineKeys> {
        let n = g.shape(keys)[0];
        let projected = self.g2.forward_rows(g, keys)?;
        let projected = g.dropout(projected, self.dropout)?;
        let (linear, left) = if self.outputs == 1 {
            let v = g.param(self.v);
            let vt = g.transpose(v)?;
            let lin = g.matmul(projected, vt)?;
            let lin = g.reshape(lin, &[n])?;
            let w = g.param(self.w);
            let wt = g.transpose(w)?;
            let left = g.matmul(projected, wt)?;
            (Some(lin), Some(left))
        } else {
            (None, None)
        };
        Ok(BiaffineKeys {
            projected,
            linear,
            left,
            len: n,
        })
    }

    /// Single-output scores of `d` against every prepared key, `[n]`.
    pub fn score_keys(&self, g: &mut Graph, d: Var, keys: &BiaffineKeys) -> Result<Var> {
        let (Some(lin), Some(left)) = (keys.linear, keys.left) else {
            return Err(Error::Contract("score_keys needs a single-output biaffine".into()));
        };
        let x1 = self.project_left(g, d)?;
        let bil = g.matmul(left, x1)?;
        let u = g.param(self.u);
        let ux = g.matmul(u, x1)?;
        let b = g.param(self.b);
        let c = g.add(ux, b)?;
        let s = g.add(bil, lin)?;
        g.add(s, c)
    }

    /// Multi-output scores of `d` against key `index`, `[outputs]`.
    pub fn score_key(&self, g: &mut Graph, d: Var, keys: &BiaffineKeys, index: usize) -> Result<Var> {
        let x1 = self.project_left(g, d)?;
        let x2 = g.row(keys.projected, index)?;
        self.bilinear(g, x1, x2)
    }
}
