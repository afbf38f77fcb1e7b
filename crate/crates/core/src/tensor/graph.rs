use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    Lookup { param: ParamId, row: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Elu(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Slice { x: Var, start: usize },
    Row { x: Var, row: usize },
    MaxRows { x: Var, argmax: Vec<usize> },
    Softmax { x: Var, mask: Option<Vec<bool>> },
    LogSoftmax { x: Var, mask: Option<Vec<bool>> },
    Pick { x: Var, index: usize },
    NegLog { x: Var, index: usize },
    Sum(Var),
    Dot(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Tensor>,
    shape: Vec<usize>,
    op: Op,
    needs_grad: bool,
}

/// Define-by-run computation graph over a borrowed parameter snapshot.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward is a single reverse sweep. A graph built
/// with [`Graph::training`] owns a seeded RNG that drives dropout; a graph
/// built with [`Graph::new`] treats dropout as identity.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    rng: Option<ChaCha8Rng>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

fn broadcastable(a: &[usize], b: &[usize]) -> bool {
    a == b || b.iter().product::<usize>() == 1 || (b.len() <= a.len() && a.ends_with(b))
}

impl<'p> Graph<'p> {
    /// Inference graph: dropout is identity.
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            rng: None,
            leaf_grads: Vec::new(),
        }
    }

    /// Training graph with dropout driven by a generator seeded from `seed`.
    pub fn training(store: &'p ParamStore, seed: u64) -> Self {
        let mut g = Graph::new(store);
        g.rng = Some(ChaCha8Rng::seed_from_u64(seed));
        g
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`, for backtracking
    /// searches. Vars at or past `len` become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        for p in &mut self.param_vars {
            if p.is_some_and(|v| v.0 >= len) {
                *p = None;
            }
        }
        self.leaf_grads.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let shape = value.shape().to_vec();
        self.nodes.push(Node {
            value: Some(value),
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(Tensor::zeros(&[n]))
    }

    /// Leaf that records its own gradient, readable through [`Graph::grad`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Variable, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let shape = self.store.value(id).shape().to_vec();
        self.nodes.push(Node {
            value: None,
            shape,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Row `row` of a 2-D parameter; backward touches only that row.
    pub fn lookup(&mut self, id: ParamId, row: usize) -> Result<Var> {
        let t = self.store.value(id);
        if t.shape().len() != 2 {
            return Err(Error::Contract(format!(
                "lookup needs a 2-D table, got {:?}",
                t.shape()
            )));
        }
        if row >= t.rows() {
            return Err(Error::Index {
                what: "embedding table",
                index: row,
                len: t.rows(),
            });
        }
        let value = Tensor::vector(t.row(row).to_vec());
        Ok(self.push(value, Op::Lookup { param: id, row }, true))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !broadcastable(ta.shape(), tb.shape()) {
            return Err(Error::shape(name, ta.shape(), tb.shape()));
        }
        let nb = tb.numel();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % nb]))
            .collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, op, ng))
    }

    /// Elementwise sum; `b` may broadcast over trailing dimensions or be a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a);
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|x| x * k).collect());
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, k), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Sums a non-empty list of same-shaped values left to right.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let (&first, rest) = xs
            .split_first()
            .ok_or_else(|| Error::Contract("add_all of empty list".into()))?;
        rest.iter().try_fold(first, |acc, &x| self.add(acc, x))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let value = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect());
        let ng = self.ng(a);
        self.push(value, op, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, elu, Op::Elu(a))
    }

    /// `[m×k]·[k×n] -> [m×n]` or `[m×k]·[k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let mut out = vec![0.0; m * n];
        gemm_nn(ta.data(), tb.data(), &mut out, m, k, n);
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(Error::shape("transpose", t.shape(), &[]));
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = t.data()[i * n + j];
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() || shape.contains(&0) {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let value = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        let ng = self.ng(a);
        Ok(self.push(value, Op::Reshape(a), ng))
    }

    /// Concatenates vectors.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Contract("concat of empty list".into()));
        }
        let mut data = Vec::new();
        for &x in xs {
            let t = self.value(x);
            if t.shape().len() != 1 {
                return Err(Error::shape("concat", t.shape(), &[]));
            }
            data.extend_from_slice(t.data());
        }
        let ng = xs.iter().any(|&x| self.ng(x));
        Ok(self.push(Tensor::vector(data), Op::Concat(xs.to_vec()), ng))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Contract("stack of empty list".into()));
        }
        let first = self.value(xs[0]).shape().to_vec();
        if first.len() != 1 {
            return Err(Error::shape("stack", &first, &[]));
        }
        let mut data = Vec::with_capacity(first[0] * xs.len());
        for &x in xs {
            let t = self.value(x);
            if t.shape() != first.as_slice() {
                return Err(Error::shape("stack", &first, t.shape()));
            }
            data.extend_from_slice(t.data());
        }
        let ng = xs.iter().any(|&x| self.ng(x));
        let value = Tensor::from_parts(vec![xs.len(), first[0]], data);
        Ok(self.push(value, Op::Stack(xs.to_vec()), ng))
    }

    /// Sub-vector `[start, start + len)`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 1 || len == 0 || start + len > t.numel() {
            return Err(Error::shape("slice", t.shape(), &[start, len]));
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        let ng = self.ng(x);
        Ok(self.push(value, Op::Slice { x, start }, ng))
    }

    pub fn row(&mut self, x: Var, row: usize) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::shape("row", t.shape(), &[row]));
        }
        if row >= t.rows() {
            return Err(Error::Index {
                what: "matrix rows",
                index: row,
                len: t.rows(),
            });
        }
        let value = Tensor::vector(t.row(row).to_vec());
        let ng = self.ng(x);
        Ok(self.push(value, Op::Row { x, row }, ng))
    }

    /// Column-wise maximum over the rows of a matrix.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::shape("max_rows", t.shape(), &[]));
        }
        let (m, n) = (t.shape()[0], t.shape()[1]);
        let mut best = t.row(0).to_vec();
        let mut argmax = vec![0usize; n];
        for r in 1..m {
            for (c, &v) in t.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let ng = self.ng(x);
        Ok(self.push(Tensor::vector(best), Op::MaxRows { x, argmax }, ng))
    }

    fn check_mask(&self, x: Var, mask: Option<&[bool]>) -> Result<()> {
        let t = self.value(x);
        if t.shape().len() != 1 {
            return Err(Error::shape("softmax", t.shape(), &[]));
        }
        if let Some(m) = mask {
            if m.len() != t.numel() {
                return Err(Error::shape("softmax mask", t.shape(), &[m.len()]));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::InvalidMask("every position is masked".into()));
            }
        }
        Ok(())
    }

    /// Softmax over a vector. `mask[i] == true` marks a candidate; masked
    /// positions come out exactly zero.
    pub fn softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        self.check_mask(x, mask)?;
        let value = Tensor::vector(softmax_values(self.value(x).data(), mask));
        let ng = self.ng(x);
        Ok(self.push(
            value,
            Op::Softmax {
                x,
                mask: mask.map(<[bool]>::to_vec),
            },
            ng,
        ))
    }

    /// Log-softmax with the same mask convention as [`Graph::softmax`];
    /// masked positions hold `-inf`.
    pub fn log_softmax(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        self.check_mask(x, mask)?;
        let v = self.value(x).data();
        let allowed = |i: usize| mask.map_or(true, |m| m[i]);
        let max = (0..v.len())
            .filter(|&i| allowed(i))
            .map(|i| v[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..v.len())
            .filter(|&i| allowed(i))
            .map(|i| (v[i] - max).exp())
            .sum();
        let lse = max + sum.ln();
        let data = (0..v.len())
            .map(|i| if allowed(i) { v[i] - lse } else { f64::NEG_INFINITY })
            .collect();
        let ng = self.ng(x);
        Ok(self.push(
            Tensor::vector(data),
            Op::LogSoftmax {
                x,
                mask: mask.map(<[bool]>::to_vec),
            },
            ng,
        ))
    }

    /// Element `index` of a vector as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let t = self.value(x);
        if index >= t.numel() {
            return Err(Error::Index {
                what: "vector",
                index,
                len: t.numel(),
            });
        }
        let value = Tensor::scalar(t.data()[index]);
        let ng = self.ng(x);
        Ok(self.push(value, Op::Pick { x, index }, ng))
    }

    /// `-ln p[target]` for a probability vector.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let t = self.value(probs);
        if target >= t.numel() {
            return Err(Error::Index {
                what: "distribution",
                index: target,
                len: t.numel(),
            });
        }
        let p = t.data()[target];
        if p <= 0.0 {
            return Err(Error::Contract(format!(
                "target {target} has probability {p}; it is masked or underflowed"
            )));
        }
        let ng = self.ng(probs);
        Ok(self.push(
            Tensor::scalar(-p.ln()),
            Op::NegLog {
                x: probs,
                index: target,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 1 || ta.shape() != tb.shape() {
            return Err(Error::shape("dot", ta.shape(), tb.shape()));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), ng))
    }

    /// Inverted-dropout keep mask: each entry is `0` with probability `rate`,
    /// else `1/(1-rate)`. `None` outside training or at rate 0.
    pub fn dropout_mask(&mut self, len: usize, rate: f64) -> Result<Option<Var>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        let Some(rng) = self.rng.as_mut() else {
            return Ok(None);
        };
        if rate == 0.0 {
            return Ok(None);
        }
        let keep = 1.0 / (1.0 - rate);
        let data = (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        Ok(Some(self.constant(Tensor::vector(data))))
    }

    /// Applies a mask from [`Graph::dropout_mask`]; identity for `None`.
    pub fn apply_mask(&mut self, x: Var, mask: Option<Var>) -> Result<Var> {
        match mask {
            Some(m) => self.mul(x, m),
            None => Ok(x),
        }
    }

    /// Inverted dropout with a fresh mask.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        let n = self.value(x).numel();
        let mask = self.dropout_mask(n, rate)?;
        match mask {
            Some(m) => {
                let shape = self.shape(x).to_vec();
                let m = if shape.len() == 1 { m } else { self.reshape(m, &shape)? };
                self.mul(x, m)
            }
            None => Ok(x),
        }
    }

    /// Gradient of a [`Graph::variable`] leaf after the last backward call(s).
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Reverse sweep from a scalar `loss`. Parameter gradients are added into
    /// `grads`, and gradients of `variable` leaves are added into the graph's
    /// own buffers; calling twice accumulates twice.
    pub fn backward(&mut self, loss: Var, grads: &mut Gradients) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if grads.len() != self.store.len() {
            return Err(Error::Contract(
                "gradient buffer does not match parameter store".into(),
            ));
        }
        let n = loss.0 + 1;
        let mut g: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        g[loss.0] = Some(vec![1.0]);
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize_with(self.nodes.len(), || None);
        }
        let bufs = grads.buffers_mut();

        for i in (0..n).rev() {
            let Some(gout) = g[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Variable => {
                    let slot = self.leaf_grads[i].get_or_insert_with(|| vec![0.0; gout.len()]);
                    axpy(slot, &gout, 1.0);
                }
                Op::Param(id) => {
                    axpy(&mut bufs[id.0], &gout, 1.0);
                }
                Op::Lookup { param, row } => {
                    let cols = gout.len();
                    axpy(&mut bufs[param.0][row * cols..(row + 1) * cols], &gout, 1.0);
                }
                Op::Add(a, b) => {
                    accumulate(&mut g, &self.nodes, *a, &gout);
                    accumulate_broadcast(&mut g, &self.nodes, *b, &gout, 1.0);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut g, &self.nodes, *a, &gout);
                    accumulate_broadcast(&mut g, &self.nodes, *b, &gout, -1.0);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    let nb = vb.len();
                    if self.nodes[a.0].needs_grad {
                        let ga: Vec<f64> = gout.iter().enumerate().map(|(k, &x)| x * vb[k % nb]).collect();
                        accumulate(&mut g, &self.nodes, *a, &ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb: Vec<f64> = gout.iter().zip(va).map(|(&x, &y)| x * y).collect();
                        accumulate_broadcast(&mut g, &self.nodes, *b, &gb, 1.0);
                    }
                }
                Op::Scale(a, k) => {
                    let ga: Vec<f64> = gout.iter().map(|x| x * k).collect();
                    accumulate(&mut g, &self.nodes, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga: Vec<f64> = gout.iter().zip(y).map(|(&d, &y)| d * (1.0 - y * y)).collect();
                    accumulate(&mut g, &self.nodes, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap().data();
                    let ga: Vec<f64> = gout.iter().zip(y).map(|(&d, &y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut g, &self.nodes, *a, &ga);
                }
                Op::Elu(a) => {
                    let x = self.val(*a);
                    let ga: Vec<f64> = gout
                        .iter()
                        .zip(x)
                        .map(|(&d, &x)| if x > 0.0 { d } else { d * x.exp() })
                        .collect();
                    accumulate(&mut g, &self.nodes, *a, &ga);
                }
                Op::MatMul(a, b) => {
                    let sa = &self.nodes[a.0].shape;
                    let (m, k) = (sa[0], sa[1]);
                    let nn = gout.len() / m;
                    if self.nodes[a.0].needs_grad {
                        // dA = dC · Bᵀ
                        let slot = g[a.0].get_or_insert_with(|| vec![0.0; m * k]);
                        gemm_nt(&gout, self.val(*b), slot, m, nn, k);
                    }
                    if self.nodes[b.0].needs_grad {
                        // dB = Aᵀ · dC
                        let slot = g[b.0].get_or_insert_with(|| vec![0.0; k * nn]);
                        gemm_tn(self.val(*a), &gout, slot, m, k, nn);
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = (node.shape[0], node.shape[1]);
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            ga[j * m + i] = gout[i * n + j];
                        }
                    }
                    accumulate(&mut g, &self.nodes, *a, &ga);
                }
                Op::Reshape(a) => accumulate(&mut g, &self.nodes, *a, &gout),
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let len = self.nodes[x.0].shape.iter().product::<usize>();
                        accumulate(&mut g, &self.nodes, x, &gout[off..off + len]);
                        off += len;
                    }
                }
                Op::Stack(xs) => {
                    let cols = node.shape[1];
                    for (r, &x) in xs.iter().enumerate() {
                        accumulate(&mut g, &self.nodes, x, &gout[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Slice { x, start } => {
                    if self.nodes[x.0].needs_grad {
                        let len = self.nodes[x.0].shape[0];
                        let slot = g[x.0].get_or_insert_with(|| vec![0.0; len]);
                        axpy(&mut slot[*start..*start + gout.len()], &gout, 1.0);
                    }
                }
                Op::Row { x, row } => {
                    if self.nodes[x.0].needs_grad {
                        let total: usize = self.nodes[x.0].shape.iter().product();
                        let cols = gout.len();
                        let slot = g[x.0].get_or_insert_with(|| vec![0.0; total]);
                        axpy(&mut slot[row * cols..(row + 1) * cols], &gout, 1.0);
                    }
                }
                Op::MaxRows { x, argmax } => {
                    if self.nodes[x.0].needs_grad {
                        let total: usize = self.nodes[x.0].shape.iter().product();
                        let cols = gout.len();
                        let slot = g[x.0].get_or_insert_with(|| vec![0.0; total]);
                        for (c, &r) in argmax.iter().enumerate() {
                            slot[r * cols + c] += gout[c];
                        }
                    }
                }
                Op::Softmax { x, mask } => {
                    let y = node.value.as_ref().unwrap().data();
                    let dot: f64 = gout.iter().zip(y).map(|(a, b)| a * b).sum();
                    let ga: Vec<f64> = (0..y.len())
                        .map(|i| {
                            if mask.as_ref().map_or(true, |m| m[i]) {
                                y[i] * (gout[i] - dot)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    accumulate(&mut g, &self.nodes, *x, &ga);
                }
                Op::LogSoftmax { x, mask } => {
                    let y = node.value.as_ref().unwrap().data();
                    let allowed = |i: usize| mask.as_ref().map_or(true, |m| m[i]);
                    let total: f64 = (0..y.len()).filter(|&i| allowed(i)).map(|i| gout[i]).sum();
                    let ga: Vec<f64> = (0..y.len())
                        .map(|i| if allowed(i) { gout[i] - y[i].exp() * total } else { 0.0 })
                        .collect();
                    accumulate(&mut g, &self.nodes, *x, &ga);
                }
                Op::Pick { x, index } => {
                    if self.nodes[x.0].needs_grad {
                        let len: usize = self.nodes[x.0].shape.iter().product();
                        let slot = g[x.0].get_or_insert_with(|| vec![0.0; len]);
                        slot[*index] += gout[0];
                    }
                }
                Op::NegLog { x, index } => {
                    if self.nodes[x.0].needs_grad {
                        let p = self.val(*x)[*index];
                        let len = self.val(*x).len();
                        let slot = g[x.0].get_or_insert_with(|| vec![0.0; len]);
                        slot[*index] -= gout[0] / p;
                    }
                }
                Op::Sum(x) => {
                    let len: usize = self.nodes[x.0].shape.iter().product();
                    let ga = vec![gout[0]; len];
                    accumulate(&mut g, &self.nodes, *x, &ga);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.val(*a), self.val(*b));
                    if self.nodes[a.0].needs_grad {
                        let ga: Vec<f64> = vb.iter().map(|y| y * gout[0]).collect();
                        accumulate(&mut g, &self.nodes, *a, &ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb: Vec<f64> = va.iter().map(|y| y * gout[0]).collect();
                        accumulate(&mut g, &self.nodes, *b, &gb);
                    }
                }
            }
        }
        Ok(())
    }

    fn val(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }
}

fn accumulate(g: &mut [Option<Vec<f64>>], nodes: &[Node], target: Var, delta: &[f64]) {
    if !nodes[target.0].needs_grad {
        return;
    }
    match &mut g[target.0] {
        Some(slot) => axpy(slot, delta, 1.0),
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

/// Adds `k * delta` into `target`, summing over broadcast positions when the
/// target is smaller than `delta`.
fn accumulate_broadcast(g: &mut [Option<Vec<f64>>], nodes: &[Node], target: Var, delta: &[f64], k: f64) {
    if !nodes[target.0].needs_grad {
        return;
    }
    let len: usize = nodes[target.0].shape.iter().product();
    let slot = g[target.0].get_or_insert_with(|| vec![0.0; len]);
    if len == delta.len() {
        axpy(slot, delta, k);
    } else {
        for (i, &d) in delta.iter().enumerate() {
            slot[i % len] += k * d;
        }
    }
}

/// Dot product with four running sums, so the loop can vectorize.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], x: &[f64], k: f64) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += k * b;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn softmax_values(v: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let allowed = |i: usize| mask.map_or(true, |m| m[i]);
    let max = (0..v.len())
        .filter(|&i| allowed(i))
        .map(|i| v[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = (0..v.len())
        .map(|i| if allowed(i) { (v[i] - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// C[m×n] += A[m×k] · B[k×n]
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            let row = &a[i * k..(i + 1) * k];
            c[i] += dot(row, b);
        }
        return;
    }
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            axpy(crow, &b[p * n..(p + 1) * n], aip);
        }
    }
}

/// C[m×k] += D[m×n] · B[k×n]ᵀ
fn gemm_nt(d: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    if n == 1 {
        for i in 0..m {
            if d[i] != 0.0 {
                axpy(&mut c[i * k..(i + 1) * k], b, d[i]);
            }
        }
        return;
    }
    for i in 0..m {
        let drow = &d[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            c[i * k + p] += dot(drow, brow);
        }
    }
}

/// C[k×n] += A[m×k]ᵀ · D[m×n]
fn gemm_tn(a: &[f64], d: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            if d[i] != 0.0 {
                axpy(c, &a[i * k..(i + 1) * k], d[i]);
            }
        }
        return;
    }
    for i in 0..m {
        let drow = &d[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            axpy(&mut c[p * n..(p + 1) * n], drow, aip);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check::{check_param_gradients, random_store};
    use rand::SeedableRng;

    fn store_with(values: &[(&str, Tensor)]) -> (ParamStore, Vec<ParamId>) {
        let mut s = ParamStore::new();
        let ids = values
            .iter()
            .map(|(n, t)| s.add(*n, t.clone()).unwrap())
            .collect();
        (s, ids)
    }

    #[test]
    fn tanh_and_sigmoid_at_zero() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let t = g.tanh(x);
        assert_eq!(g.value(t).data(), &[0.0, 0.0]);
        let z = g.constant(Tensor::vector(vec![0.0]));
        let y = g.sigmoid(z);
        assert_eq!(g.value(y).data(), &[0.5]);
    }

    #[test]
    fn elu_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(xs.clone()));
        let y = g.elu(x);
        for (i, &v) in xs.iter().enumerate() {
            let expect = if v > 0.0 { v } else { v.exp() - 1.0 };
            assert!((g.value(y).data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let a = g.constant(Tensor::zeros(&[3]));
        let b = g.constant(Tensor::zeros(&[2]));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[3]") && err.contains("[2]"), "{err}");
    }

    #[test]
    fn matmul_identity_zero_and_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let i3 = g.constant(Tensor::matrix(3, 3, eye).unwrap());
        let mm = g.constant(Tensor::matrix(3, 3, m.clone()).unwrap());
        let p = g.matmul(i3, mm).unwrap();
        assert_eq!(g.value(p).data(), m.as_slice());
        let z = g.constant(Tensor::zeros(&[3, 3]));
        let p = g.matmul(z, mm).unwrap();
        assert!(g.value(p).data().iter().all(|&v| v == 0.0));

        let a: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let va = g.constant(Tensor::matrix(4, 5, a.clone()).unwrap());
        let vb = g.constant(Tensor::matrix(5, 3, b.clone()).unwrap());
        let p = g.matmul(va, vb).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..5 {
                    acc += a[i * 5 + k] * b[k * 3 + j];
                }
                assert!((g.value(p).data()[i * 3 + j] - acc).abs() < 1e-12);
            }
        }
        let bad = g.constant(Tensor::zeros(&[4, 3]));
        assert!(matches!(g.matmul(va, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_cases() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let p = g.softmax(x, None).unwrap();
        for &v in g.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = g.constant(Tensor::vector(vec![5.0, 7.0, 9.0]));
        let p = g.softmax(x, Some(&[true, true, false])).unwrap();
        let (e5, e7) = (5f64.exp(), 7f64.exp());
        let v = g.value(p).data();
        assert!((v[0] - e5 / (e5 + e7)).abs() < 1e-12);
        assert!((v[1] - e7 / (e5 + e7)).abs() < 1e-12);
        assert_eq!(v[2], 0.0);

        let x = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let p = g.softmax(x, None).unwrap();
        assert_eq!(g.value(p).data()[0], 1.0);
        assert!(g.value(p).data()[1] < 1e-300);

        let err = g.softmax(x, Some(&[false, false])).unwrap_err();
        assert!(matches!(err, Error::InvalidMask(_)));
    }

    #[test]
    fn cross_entropy_values() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let one_hot = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let l = g.cross_entropy(one_hot, 1).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        let uni = g.constant(Tensor::vector(vec![0.25; 4]));
        let l = g.cross_entropy(uni, 3).unwrap();
        assert!((g.scalar(l) - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(g.cross_entropy(uni, 4), Err(Error::Index { .. })));
    }

    #[test]
    fn square_gradient() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.variable(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let mut grads = Gradients::zeros(&s);
        g.backward(y, &mut grads).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
        // accumulation across calls
        g.backward(y, &mut grads).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[12.0]);
    }

    #[test]
    fn constant_graph_and_unreachable_params_get_zero_grads() {
        let (s, ids) = store_with(&[
            ("used", Tensor::vector(vec![1.0, 2.0])),
            ("unused", Tensor::vector(vec![3.0])),
        ]);
        let mut g = Graph::new(&s);
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let l = g.sum(c);
        let mut grads = Gradients::zeros(&s);
        g.backward(l, &mut grads).unwrap();
        assert!(grads.iter().all(|(_, b)| b.iter().all(|&x| x == 0.0)));

        let mut g = Graph::new(&s);
        let p = g.param(ids[0]);
        let l = g.sum(p);
        g.backward(l, &mut grads).unwrap();
        assert_eq!(grads.get(ids[0]), &[1.0, 1.0]);
        assert_eq!(grads.get(ids[1]), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
        let mut grads = Gradients::zeros(&s);
        assert!(matches!(g.backward(x, &mut grads), Err(Error::Contract(_))));
    }

    #[test]
    fn lookup_accumulates_into_row_only() {
        let (s, ids) = store_with(&[("emb", Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap())]);
        let mut g = Graph::new(&s);
        let a = g.lookup(ids[0], 1).unwrap();
        assert_eq!(g.value(a).data(), &[3.0, 4.0]);
        let b = g.lookup(ids[0], 1).unwrap();
        let ab = g.add(a, b).unwrap();
        let l = g.sum(ab);
        let mut grads = Gradients::zeros(&s);
        g.backward(l, &mut grads).unwrap();
        assert_eq!(grads.get(ids[0]), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn elementwise_and_matmul_gradients_over_three_shapes() {
        for (seed, (m, k, n)) in [(1u64, (2, 3, 4)), (2, (5, 1, 3)), (3, (4, 6, 1))] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (store, ids) = random_store(&[("a", &[m, k]), ("b", &[k, n]), ("c", &[n])], &mut rng);
            let report = check_param_gradients(&store, |g| {
                let a = g.param(ids[0]);
                let b = g.param(ids[1]);
                let c = g.param(ids[2]);
                let p = g.matmul(a, b)?;
                let p = g.add(p, c)?;
                let t = g.tanh(p);
                let s = g.sigmoid(p);
                let e = g.elu(p);
                let ts = g.mul(t, s)?;
                let x = g.sub(ts, e)?;
                let x = g.scale(x, 0.7);
                Ok(g.sum(x))
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn structural_op_gradients() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3 + seed as usize;
            let (store, ids) = random_store(&[("x", &[n]), ("y", &[n]), ("w", &[2 * n, 2])], &mut rng);
            let report = check_param_gradients(&store, |g| {
                let x = g.param(ids[0]);
                let y = g.param(ids[1]);
                let w = g.param(ids[2]);
                let c = g.concat(&[x, y])?;
                let st = g.stack(&[x, y, x])?;
                let mx = g.max_rows(st)?;
                let wt = g.transpose(w)?;
                let r = g.reshape(wt, &[2 * n * 2])?;
                let sl = g.slice(r, 1, 2 * n)?;
                let d = g.dot(sl, c)?;
                let row = g.row(st, 1)?;
                let d2 = g.dot(row, mx)?;
                let lsm = g.log_softmax(c, Some(&(0..2 * n).map(|i| i % 3 != 2).collect::<Vec<_>>()))?;
                let pk = g.pick(lsm, 1)?;
                let sm = g.softmax(y, None)?;
                let ce = g.cross_entropy(sm, 0)?;
                g.add_all(&[d, d2, pk, ce])
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn dropout_modes() {
        let s = ParamStore::new();
        let data: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut g = Graph::training(&s, 5);
        let x = g.constant(Tensor::vector(data.clone()));
        let y = g.dropout(x, 0.0).unwrap();
        assert_eq!(g.value(y).data(), data.as_slice());
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(data.clone()));
        let y = g.dropout(x, 0.9).unwrap();
        assert_eq!(g.value(y).data(), data.as_slice());
        assert!(matches!(g.dropout(x, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_statistics() {
        let s = ParamStore::new();
        let mut g = Graph::training(&s, 17);
        let n = 100_000;
        let x = g.constant(Tensor::filled(&[n], 2.0));
        let y = g.dropout(x, 0.33).unwrap();
        let v = g.value(y).data();
        let survivors = v.iter().filter(|&&x| x != 0.0).count() as f64 / n as f64;
        assert!((survivors - 0.67).abs() < 0.01, "{survivors}");
        let mean = v.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "{mean}");
    }
}
