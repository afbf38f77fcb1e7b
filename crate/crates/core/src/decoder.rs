//! Stack-driven hierarchical decoder.
//!
//! Each step fuses the previous step's state, the parent's state and the
//! most recent sibling's state into the recurrent hidden input, and feeds the
//! parent-side encoder features as the cell input. The memory cell (LSTM)
//! is taken from the parent's state.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{CellKind, RecurrentCell, RecurrentState};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Which decoder states feed the fusion function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Parent only.
    P,
    /// Parent and sibling.
    PS,
    /// Parent, sibling and previous step.
    PST,
}

impl Variant {
    pub fn uses_sibling(self) -> bool {
        matches!(self, Variant::PS | Variant::PST)
    }

    pub fn uses_temporal(self) -> bool {
        self == Variant::PST
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(Variant::P),
            "ps" => Ok(Variant::PS),
            "pst" => Ok(Variant::PST),
            _ => Err(Error::Config(format!("unknown variant `{s}` (expected p, ps or pst)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::P => "p",
            Variant::PS => "ps",
            Variant::PST => "pst",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fusion {
    /// `g = σ(W_gd d_prev + W_gp d_p + W_gs d_s + b_g)`
    Gate,
    /// `g = σ(W_gp (d_prev ⊙ d_p) + W_gs (d_prev ⊙ d_s) + b_g)`
    SGate,
    /// No gate.
    Plain,
}

impl FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gate" => Ok(Fusion::Gate),
            "sgate" => Ok(Fusion::SGate),
            "plain" => Ok(Fusion::Plain),
            _ => Err(Error::Config(format!("unknown fusion `{s}` (expected gate, sgate or plain)"))),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Gate => "gate",
            Fusion::SGate => "sgate",
            Fusion::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub variant: Variant,
    pub fusion: Fusion,
    pub cell: CellKind,
    pub layers: usize,
    pub size: usize,
    /// Width of the cell input (encoder-state width).
    pub input_dim: usize,
    /// Dropout on the gated hidden input of every layer.
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateParams {
    pub wgd: ParamId,
    pub wgp: ParamId,
    pub wgs: ParamId,
    pub bg: ParamId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionLayer {
    pub wd: ParamId,
    pub wp: ParamId,
    pub ws: ParamId,
    pub gate: GateParams,
    pub cell: RecurrentCell,
}

/// Per-layer recurrent states of one decoding step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    pub layers: Vec<RecurrentState>,
}

impl DecoderState {
    /// Output of the top layer, `d_t`.
    pub fn top(&self) -> Var {
        self.layers[self.layers.len() - 1].h
    }
}

/// Inputs for one fused step. Absent states act as zero vectors.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub prev: Option<&'a DecoderState>,
    pub parent: Option<&'a DecoderState>,
    pub sibling: Option<&'a DecoderState>,
    /// Cell input: the parent-side encoder features.
    pub input: Var,
}

/// One stack entry: the element to expand and the decoding steps whose
/// states act as its parent and most recent sibling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecoderFrame<E> {
    pub element: E,
    pub parent_step: Option<usize>,
    pub sibling_step: Option<usize>,
    pub parent_element: Option<E>,
    pub sibling_element: Option<E>,
}

impl<E> DecoderFrame<E> {
    pub fn root(element: E) -> Self {
        DecoderFrame {
            element,
            parent_step: None,
            sibling_step: None,
            parent_element: None,
            sibling_element: None,
        }
    }
}

/// Initial dependency stack: the ROOT frame alone.
pub fn init_dep_stack() -> Vec<DecoderFrame<usize>> {
    vec![DecoderFrame::root(0)]
}

/// Initial discourse stack over `m` EDUs. Spans of two EDUs are split
/// without pointing, so they are returned as a forced split instead.
pub fn init_rst_stack(m: usize) -> (Vec<DecoderFrame<(usize, usize)>>, Option<(usize, usize)>) {
    match m {
        0 | 1 => (Vec::new(), None),
        2 => (Vec::new(), Some((1, 2))),
        _ => (vec![DecoderFrame::root((1, m))], None),
    }
}

/// Sum of the available encoder features: element, its parent, its sibling.
pub fn partial_tree_features(g: &mut Graph, element: Var, parent: Option<Var>, sibling: Option<Var>) -> Result<Var> {
    let mut x = element;
    if let Some(p) = parent {
        x = g.add(x, p)?;
    }
    if let Some(s) = sibling {
        x = g.add(x, s)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierDecoder {
    pub config: DecoderConfig,
    pub layers: Vec<FusionLayer>,
}

impl HierDecoder {
    /// Allocates every fusion and gate weight regardless of variant and
    /// fusion mode, so decoders built from the same seed share parameters.
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: DecoderConfig, rng: &mut R) -> Result<Self> {
        if config.layers == 0 || config.size == 0 {
            return Err(Error::Config("decoder needs at least one layer of positive size".into()));
        }
        let h = config.size;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("{name}.l{l}");
            let wd = store.glorot(format!("{p}.wd"), h, h, rng)?;
            let wp = store.glorot(format!("{p}.wp"), h, h, rng)?;
            let ws = store.glorot(format!("{p}.ws"), h, h, rng)?;
            let gate = GateParams {
                wgd: store.glorot(format!("{p}.wgd"), h, h, rng)?,
                wgp: store.glorot(format!("{p}.wgp"), h, h, rng)?,
                wgs: store.glorot(format!("{p}.wgs"), h, h, rng)?,
                bg: store.zeros(format!("{p}.bg"), &[h])?,
            };
            let input = if l == 0 { config.input_dim } else { h };
            let cell = RecurrentCell::new(config.cell, store, &format!("{p}.cell"), input, h, rng)?;
            layers.push(FusionLayer { wd, wp, ws, gate, cell });
        }
        Ok(HierDecoder { config, layers })
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    fn layer_state(&self, s: Option<&DecoderState>, l: usize) -> Result<Option<RecurrentState>> {
        match s {
            None => Ok(None),
            Some(s) if s.layers.len() == self.layers.len() => Ok(Some(s.layers[l])),
            Some(s) => Err(Error::Contract(format!(
                "decoder state has {} layers, decoder has {}",
                s.layers.len(),
                self.layers.len()
            ))),
        }
    }

    /// Fused hidden input `h″` for layer `l` before dropout.
    fn fused_hidden(&self, g: &mut Graph, l: usize, prev: Option<Var>, parent: Option<Var>, sibling: Option<Var>) -> Result<Var> {
        let layer = &self.layers[l];
        let variant = self.config.variant;
        let h = self.config.size;
        let mut zero = None;
        let mut or_zero = |g: &mut Graph, v: Option<Var>| -> Var {
            v.unwrap_or_else(|| *zero.get_or_insert_with(|| g.zeros(h)))
        };
        let dp = or_zero(g, parent);
        let ds = if variant.uses_sibling() { Some(or_zero(g, sibling)) } else { None };
        let dprev = if variant.uses_temporal() { Some(or_zero(g, prev)) } else { None };

        let mut terms = Vec::with_capacity(3);
        if let Some(d) = dprev {
            let w = g.param(layer.wd);
            terms.push(g.matmul(w, d)?);
        }
        let w = g.param(layer.wp);
        terms.push(g.matmul(w, dp)?);
        if let Some(s) = ds {
            let w = g.param(layer.ws);
            terms.push(g.matmul(w, s)?);
        }
        let pre = g.add_all(&terms)?;
        let hidden = g.tanh(pre);

        let gate_pre = match self.config.fusion {
            Fusion::Plain => return Ok(hidden),
            Fusion::Gate => {
                let mut t = Vec::with_capacity(4);
                if let Some(d) = dprev {
                    let w = g.param(layer.gate.wgd);
                    t.push(g.matmul(w, d)?);
                }
                let w = g.param(layer.gate.wgp);
                t.push(g.matmul(w, dp)?);
                if let Some(s) = ds {
                    let w = g.param(layer.gate.wgs);
                    t.push(g.matmul(w, s)?);
                }
                t.push(g.param(layer.gate.bg));
                g.add_all(&t)?
            }
            Fusion::SGate => {
                let d = dprev.unwrap_or_else(|| or_zero(g, None));
                let mut t = Vec::with_capacity(3);
                let dpp = g.mul(d, dp)?;
                let w = g.param(layer.gate.wgp);
                t.push(g.matmul(w, dpp)?);
                if let Some(s) = ds {
                    let dss = g.mul(d, s)?;
                    let w = g.param(layer.gate.wgs);
                    t.push(g.matmul(w, dss)?);
                }
                t.push(g.param(layer.gate.bg));
                g.add_all(&t)?
            }
        };
        let gate = g.sigmoid(gate_pre);
        g.mul(gate, hidden)
    }

    /// One decoding step; returns the new per-layer states.
    pub fn fuse(&self, g: &mut Graph, inputs: StepInputs<'_>) -> Result<DecoderState> {
        let got = g.shape(inputs.input)[0];
        if got != self.config.input_dim {
            return Err(Error::shape("decoder input", &[self.config.input_dim], &[got]));
        }
        let mut x = inputs.input;
        let mut out = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let prev = self.layer_state(inputs.prev, l)?;
            let parent = self.layer_state(inputs.parent, l)?;
            let sibling = self.layer_state(inputs.sibling, l)?;
            let hidden = self.fused_hidden(g, l, prev.map(|s| s.h), parent.map(|s| s.h), sibling.map(|s| s.h))?;
            let hidden = g.dropout(hidden, self.config.dropout)?;
            let state = self.layers[l].cell.step(
                g,
                x,
                RecurrentState {
                    h: hidden,
                    c: parent.and_then(|s| s.c),
                },
            )?;
            x = state.h;
            out.push(state);
        }
        Ok(DecoderState { layers: out })
    }
}

/// One pointing decision for trace export.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub popped: String,
    pub pointed: String,
    /// Attention over all positions; masked positions are 0.
    pub probs: Vec<f64>,
}

/// Line format: `step<TAB>popped<TAB>pointed<TAB>p_0 p_1 …`.
pub fn format_trace(steps: &[TraceStep]) -> String {
    let mut out = String::new();
    for s in steps {
        let probs: Vec<String> = s.probs.iter().map(|p| format!("{p:.6}")).collect();
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.step, s.popped, s.pointed, probs.join(" ")));
    }
    out
}
