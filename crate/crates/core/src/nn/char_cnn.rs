use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingTable;
use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Character convolution with max-pooling over positions.
///
/// Words are padded with one pad symbol on each side, so a single character
/// still yields one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharCnn {
    pub chars: EmbeddingTable,
    /// `[filters × window·char_dim]`
    pub filters: ParamId,
    pub bias: ParamId,
    pub window: usize,
    pub num_filters: usize,
    pub pad: usize,
}

impl CharCnn {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        chars: EmbeddingTable,
        window: usize,
        num_filters: usize,
        pad: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let fan_in = window * chars.dim;
        Ok(CharCnn {
            chars,
            filters: store.glorot(format!("{name}.filters"), num_filters, fan_in, rng)?,
            bias: store.zeros(format!("{name}.bias"), &[num_filters])?,
            window,
            num_filters,
            pad,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.num_filters
    }

    pub fn forward(&self, g: &mut Graph, chars: &[usize], dropout: f64) -> Result<Var> {
        let mut padded = Vec::with_capacity(chars.len() + 2);
        padded.push(self.pad);
        padded.extend_from_slice(chars);
        padded.push(self.pad);
        while padded.len() < self.window {
            padded.push(self.pad);
        }
        let mut embs = Vec::with_capacity(padded.len());
        for &c in &padded {
            let e = self.chars.lookup(g, c)?;
            embs.push(g.dropout(e, dropout)?);
        }
        let windows = (0..=padded.len() - self.window)
            .map(|p| g.concat(&embs[p..p + self.window]))
            .collect::<Result<Vec<_>>>()?;
        let stacked = g.stack(&windows)?;
        let f = g.param(self.filters);
        let ft = g.transpose(f)?;
        let responses = g.matmul(stacked, ft)?;
        let b = g.param(self.bias);
        let responses = g.add(responses, b)?;
        g.max_rows(responses)
    }
}
