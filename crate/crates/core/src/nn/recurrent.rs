use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl std::str::FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell kind `{other}` (expected lstm|gru)"))),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

/// Gate rows are ordered input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let wx = store.glorot(format!("{name}.wx"), 4 * hidden, input, rng)?;
        let wh = store.glorot(format!("{name}.wh"), 4 * hidden, hidden, rng)?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add(format!("{name}.bias"), Tensor::vector(b))?;
        Ok(LstmCell {
            wx,
            wh,
            bias,
            input,
            hidden,
        })
    }

    /// One step; returns `(h, c)`.
    pub fn step(&self, g: &mut Graph, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let h = self.hidden;
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let b = g.param(self.bias);
        let ax = g.matmul(wx, x)?;
        let ah = g.matmul(wh, h_prev)?;
        let a = g.add(ax, ah)?;
        let a = g.add(a, b)?;
        let i = g.slice(a, 0, h)?;
        let f = g.slice(a, h, h)?;
        let c_hat = g.slice(a, 2 * h, h)?;
        let o = g.slice(a, 3 * h, h)?;
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let c_hat = g.tanh(c_hat);
        let o = g.sigmoid(o);
        let fc = g.mul(f, c_prev)?;
        let ic = g.mul(i, c_hat)?;
        let c = g.add(fc, ic)?;
        let tc = g.tanh(c);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c))
    }
}

/// Gate rows are ordered update, reset, candidate. The update gate `z`
/// carries the previous state: `h = (1 - z) ⊙ n + z ⊙ h_prev`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(GruCell {
            wx: store.glorot(format!("{name}.wx"), 3 * hidden, input, rng)?,
            wh: store.glorot(format!("{name}.wh"), 3 * hidden, hidden, rng)?,
            bx: store.zeros(format!("{name}.bx"), &[3 * hidden])?,
            bh: store.zeros(format!("{name}.bh"), &[3 * hidden])?,
            input,
            hidden,
        })
    }

    pub fn step(&self, g: &mut Graph, x: Var, h_prev: Var) -> Result<Var> {
        self.step_reading(g, x, h_prev, h_prev)
    }

    /// Step whose gates read `h_read` while the update carries `h_prev`.
    /// Recurrent dropout masks only the read copy, so the carried state keeps
    /// its scale across time.
    pub fn step_reading(&self, g: &mut Graph, x: Var, h_prev: Var, h_read: Var) -> Result<Var> {
        let h = self.hidden;
        let wx = g.param(self.wx);
        let wh = g.param(self.wh);
        let bx = g.param(self.bx);
        let bh = g.param(self.bh);
        let ax = g.matmul(wx, x)?;
        let ax = g.add(ax, bx)?;
        let ah = g.matmul(wh, h_read)?;
        let ah = g.add(ah, bh)?;
        let zx = g.slice(ax, 0, h)?;
        let zh = g.slice(ah, 0, h)?;
        let rx = g.slice(ax, h, h)?;
        let rh = g.slice(ah, h, h)?;
        let nx = g.slice(ax, 2 * h, h)?;
        let nh = g.slice(ah, 2 * h, h)?;
        let z = g.add(zx, zh)?;
        let z = g.sigmoid(z);
        let r = g.add(rx, rh)?;
        let r = g.sigmoid(r);
        let rn = g.mul(r, nh)?;
        let n = g.add(nx, rn)?;
        let n = g.tanh(n);
        let diff = g.sub(h_prev, n)?;
        let carry = g.mul(z, diff)?;
        g.add(n, carry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecurrentCell {
    Lstm(LstmCell),
    Gru(GruCell),
}

/// Hidden state plus, for LSTMs, the memory cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecurrentState {
    pub h: Var,
    pub c: Option<Var>,
}

impl RecurrentCell {
    pub fn new<R: Rng>(
        kind: CellKind,
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            CellKind::Lstm => RecurrentCell::Lstm(LstmCell::new(store, name, input, hidden, rng)?),
            CellKind::Gru => RecurrentCell::Gru(GruCell::new(store, name, input, hidden, rng)?),
        })
    }

    pub fn kind(&self) -> CellKind {
        match self {
            RecurrentCell::Lstm(_) => CellKind::Lstm,
            RecurrentCell::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            RecurrentCell::Lstm(c) => c.hidden,
            RecurrentCell::Gru(c) => c.hidden,
        }
    }

    pub fn input(&self) -> usize {
        match self {
            RecurrentCell::Lstm(c) => c.input,
            RecurrentCell::Gru(c) => c.input,
        }
    }

    pub fn zero_state(&self, g: &mut Graph) -> RecurrentState {
        let h = g.zeros(self.hidden());
        let c = match self {
            RecurrentCell::Lstm(_) => Some(g.zeros(self.hidden())),
            RecurrentCell::Gru(_) => None,
        };
        RecurrentState { h, c }
    }

    /// One step from `prev`. A missing LSTM memory cell is treated as zero.
    pub fn step(&self, g: &mut Graph, x: Var, prev: RecurrentState) -> Result<RecurrentState> {
        match self {
            RecurrentCell::Lstm(cell) => {
                let c_prev = match prev.c {
                    Some(c) => c,
                    None => g.zeros(cell.hidden),
                };
                let (h, c) = cell.step(g, x, prev.h, c_prev)?;
                Ok(RecurrentState { h, c: Some(c) })
            }
            RecurrentCell::Gru(cell) => Ok(RecurrentState {
                h: cell.step(g, x, prev.h)?,
                c: None,
            }),
        }
    }
}

/// Stacked bidirectional recurrent encoder. Each layer's output at position
/// `t` is `[forward_t ; backward_t]`; layer `l` reads layer `l-1` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiRecurrent {
    pub layers: Vec<(RecurrentCell, RecurrentCell)>,
    /// Variational dropout on the recurrent hidden state (mask shared across time).
    pub recurrent_dropout: f64,
    /// Variational dropout on each layer's output sequence.
    pub layer_dropout: f64,
}

impl BiRecurrent {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        kind: CellKind,
        input: usize,
        hidden: usize,
        num_layers: usize,
        recurrent_dropout: f64,
        layer_dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let inp = if l == 0 { input } else { 2 * hidden };
            let fwd = RecurrentCell::new(kind, store, &format!("{name}.l{l}.fwd"), inp, hidden, rng)?;
            let bwd = RecurrentCell::new(kind, store, &format!("{name}.l{l}.bwd"), inp, hidden, rng)?;
            layers.push((fwd, bwd));
        }
        Ok(BiRecurrent {
            layers,
            recurrent_dropout,
            layer_dropout,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.layers[0].0.hidden()
    }

    fn run(&self, g: &mut Graph, cell: &RecurrentCell, xs: &[Var], reverse: bool) -> Result<Vec<Var>> {
        let mask = g.dropout_mask(cell.hidden(), self.recurrent_dropout)?;
        let mut state = cell.zero_state(g);
        let mut out = vec![state.h; xs.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for t in order {
            let read = g.apply_mask(state.h, mask)?;
            state = match cell {
                RecurrentCell::Gru(c) => RecurrentState {
                    h: c.step_reading(g, xs[t], state.h, read)?,
                    c: None,
                },
                _ => cell.step(g, xs[t], RecurrentState { h: read, c: state.c })?,
            };
            out[t] = state.h;
        }
        Ok(out)
    }

    pub fn encode(&self, g: &mut Graph, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::Contract("cannot encode an empty sequence".into()));
        }
        let mut xs = inputs.to_vec();
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            if l > 0 {
                let mask = g.dropout_mask(g.value(xs[0]).numel(), self.layer_dropout)?;
                xs = xs.iter().map(|&x| g.apply_mask(x, mask)).collect::<Result<_>>()?;
            }
            let f = self.run(g, fwd, &xs, false)?;
            let b = self.run(g, bwd, &xs, true)?;
            xs = f
                .iter()
                .zip(&b)
                .map(|(&a, &b)| g.concat(&[a, b]))
                .collect::<Result<_>>()?;
        }
        let mask = g.dropout_mask(g.value(xs[0]).numel(), self.layer_dropout)?;
        xs.iter().map(|&x| g.apply_mask(x, mask)).collect()
    }
}
