use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Recorded operation. Inputs are node indices on the owning tape, which
/// always precede the node itself.
#[derive(Debug)]
pub(crate) enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Sum(usize),
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    SliceLast {
        input: usize,
        start: usize,
    },
    Reshape(usize),
    SoftmaxXent {
        logits: usize,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    Gather {
        table: usize,
        ids: Vec<usize>,
    },
    SelectStep {
        input: usize,
        step: usize,
    },
    StackSteps(Vec<usize>),
    RowSelect {
        keep: Vec<bool>,
        on: usize,
        off: usize,
    },
    MaskedSoftmax(usize),
    WeightedSum {
        states: usize,
        weights: usize,
    },
    Unfold {
        input: usize,
        height: usize,
    },
    MaxSteps {
        input: usize,
        argmax: Vec<usize>,
    },
    MeanSteps {
        input: usize,
        lengths: Vec<usize>,
    },
}

pub(crate) struct Node<T> {
    pub(crate) value: Tensor<T>,
    pub(crate) op: Op<T>,
    pub(crate) requires_grad: bool,
    /// Accumulated gradient; only leaves that require grad keep one.
    pub(crate) grad: Option<Vec<T>>,
}

/// Linear record of a forward computation. Backward replays it in exact
/// reverse order, so the accumulation order of every gradient is fixed by
/// the order ops were recorded.
pub struct Tape<T> {
    id: u64,
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T> std::fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tape(id={}, nodes={})", self.id, self.nodes.len())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input value. Leaves with `requires_grad` collect gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| vec![T::zero(); value.len()]);
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad,
        });
        self.var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[self.check(v).expect("var from another tape")].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.check(v).expect("var from another tape")].requires_grad
    }

    /// Accumulated gradient of a leaf, shaped like its value.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[self.check(v).ok()?];
        let g = node.grad.as_ref()?;
        Tensor::new(node.value.shape(), g.clone()).ok()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.iter_mut().for_each(|x| *x = T::zero());
            }
        }
    }

    pub(crate) fn var(&self, index: usize) -> Var {
        Var {
            tape: self.id,
            index,
        }
    }

    pub(crate) fn check(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::NotOnTape);
        }
        Ok(v.index)
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[usize]) -> Var {
        debug_assert!(
            !inputs.iter().all(|&i| self.nodes[i].value.all_finite()) || value.all_finite(),
            "non-finite output from finite inputs in {op:?}"
        );
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        self.var(self.nodes.len() - 1)
    }

    /// Backpropagate from a scalar loss. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let idx = self.check(loss)?;
        let shape = self.nodes[idx].value.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NotScalar(shape.to_vec()));
        }
        let seed = Tensor::full(self.nodes[idx].value.shape(), T::one());
        self.backward_from(loss, &seed)
    }

    /// Backpropagate an externally supplied gradient `seed` (same shape as
    /// `root`) through everything recorded before `root`.
    pub fn backward_from(&mut self, root: Var, seed: &Tensor<T>) -> Result<(), TensorError> {
        let root = self.check(root)?;
        if seed.shape() != self.nodes[root].value.shape() {
            return Err(TensorError::Shape {
                op: "backward_from",
                lhs: self.nodes[root].value.shape().to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=root).map(|_| None).collect();
        accumulate(&self.nodes, &mut grads, root, seed.data().to_vec());
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, g, &mut grads);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: Vec<T>, grads: &mut [Option<Vec<T>>]) {
        if let Op::Leaf = self.nodes[i].op {
            let acc = self.nodes[i].grad.as_mut().expect("grad leaf has buffer");
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += *v;
            }
            return;
        }
        let nodes = &self.nodes;
        let out_shape = nodes[i].value.shape();
        match &nodes[i].op {
            Op::Leaf => unreachable!(),
            &Op::MatMul(a, b) => {
                let (m, k) = rc(&nodes[a].value);
                let n = out_shape[1];
                if nodes[a].requires_grad {
                    let bv = nodes[b].value.data();
                    let mut da = vec![T::zero(); m * k];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let mut s = T::zero();
                            for j in 0..n {
                                s += grow[j] * brow[j];
                            }
                            da[r * k + p] = s;
                        }
                    }
                    accumulate(nodes, grads, a, da);
                }
                if nodes[b].requires_grad {
                    let av = nodes[a].value.data();
                    let mut db = vec![T::zero(); k * n];
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let x = av[r * k + p];
                            let drow = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                drow[j] += x * grow[j];
                            }
                        }
                    }
                    accumulate(nodes, grads, b, db);
                }
            }
            &Op::Add(a, b) => {
                accumulate(nodes, grads, a, g.clone());
                accumulate(nodes, grads, b, g);
            }
            &Op::Mul(a, b) => {
                if nodes[a].requires_grad {
                    let bv = nodes[b].value.data();
                    accumulate(
                        nodes,
                        grads,
                        a,
                        g.iter().zip(bv).map(|(&x, &y)| x * y).collect(),
                    );
                }
                if nodes[b].requires_grad {
                    let av = nodes[a].value.data();
                    accumulate(
                        nodes,
                        grads,
                        b,
                        g.iter().zip(av).map(|(&x, &y)| x * y).collect(),
                    );
                }
            }
            &Op::AddBias(x, bias) => {
                if nodes[bias].requires_grad {
                    let n = nodes[bias].value.len();
                    let mut db = vec![T::zero(); n];
                    for row in g.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += *v;
                        }
                    }
                    accumulate(nodes, grads, bias, db);
                }
                accumulate(nodes, grads, x, g);
            }
            &Op::Tanh(x) => {
                let y = nodes[i].value.data();
                let d = g
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| gv * (T::one() - yv * yv))
                    .collect();
                accumulate(nodes, grads, x, d);
            }
            &Op::Sigmoid(x) => {
                let y = nodes[i].value.data();
                let d = g
                    .iter()
                    .zip(y)
                    .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                    .collect();
                accumulate(nodes, grads, x, d);
            }
            &Op::Relu(x) => {
                let xv = nodes[x].value.data();
                let d = g
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                accumulate(nodes, grads, x, d);
            }
            &Op::Sum(x) => {
                let n = nodes[x].value.len();
                accumulate(nodes, grads, x, vec![g[0]; n]);
            }
            Op::Concat { parts, axis } => {
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let total = out_shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let extent = nodes[p].value.shape()[*axis];
                    if nodes[p].requires_grad {
                        let mut d = Vec::with_capacity(outer * extent * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&g[base..base + extent * inner]);
                        }
                        accumulate(nodes, grads, p, d);
                    }
                    offset += extent;
                }
            }
            &Op::SliceLast { input, start } => {
                let (rows, cols) = rc(&nodes[input].value);
                let width = *out_shape.last().expect("rank >= 1");
                let mut d = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + width]
                        .copy_from_slice(&g[r * width..(r + 1) * width]);
                }
                accumulate(nodes, grads, input, d);
            }
            &Op::Reshape(x) => accumulate(nodes, grads, x, g),
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let classes = nodes[*logits].value.shape()[1];
                let scale = g[0] / T::lit(labels.len() as f64);
                let mut d = Vec::with_capacity(probs.len());
                for (r, &label) in labels.iter().enumerate() {
                    for c in 0..classes {
                        let onehot = if c == label { T::one() } else { T::zero() };
                        d.push((probs[r * classes + c] - onehot) * scale);
                    }
                }
                accumulate(nodes, grads, *logits, d);
            }
            Op::Gather { table, ids } => {
                if nodes[*table].requires_grad {
                    let (vocab, dim) = rc(&nodes[*table].value);
                    let mut d = vec![T::zero(); vocab * dim];
                    for (pos, &id) in ids.iter().enumerate() {
                        // the pad row never receives gradient
                        if id == 0 {
                            continue;
                        }
                        let src = &g[pos * dim..(pos + 1) * dim];
                        for (dst, v) in d[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                            *dst += *v;
                        }
                    }
                    accumulate(nodes, grads, *table, d);
                }
            }
            &Op::SelectStep { input, step } => {
                let s = nodes[input].value.shape();
                let (b, l, e) = (s[0], s[1], s[2]);
                let mut d = vec![T::zero(); b * l * e];
                for r in 0..b {
                    d[(r * l + step) * e..(r * l + step + 1) * e]
                        .copy_from_slice(&g[r * e..(r + 1) * e]);
                }
                accumulate(nodes, grads, input, d);
            }
            Op::StackSteps(parts) => {
                let (b, l, e) = (out_shape[0], out_shape[1], out_shape[2]);
                for (t, &p) in parts.iter().enumerate() {
                    if !nodes[p].requires_grad {
                        continue;
                    }
                    let mut d = Vec::with_capacity(b * e);
                    for r in 0..b {
                        d.extend_from_slice(&g[(r * l + t) * e..(r * l + t + 1) * e]);
                    }
                    accumulate(nodes, grads, p, d);
                }
            }
            Op::RowSelect { keep, on, off } => {
                let cols = out_shape[1];
                let route = |take: bool| -> Vec<T> {
                    let mut d = vec![T::zero(); g.len()];
                    for (r, &k) in keep.iter().enumerate() {
                        if k == take {
                            d[r * cols..(r + 1) * cols]
                                .copy_from_slice(&g[r * cols..(r + 1) * cols]);
                        }
                    }
                    d
                };
                if nodes[*on].requires_grad {
                    accumulate(nodes, grads, *on, route(true));
                }
                if nodes[*off].requires_grad {
                    accumulate(nodes, grads, *off, route(false));
                }
            }
            &Op::MaskedSoftmax(x) => {
                let l = out_shape[1];
                let y = nodes[i].value.data();
                let mut d = vec![T::zero(); y.len()];
                for r in 0..out_shape[0] {
                    let yr = &y[r * l..(r + 1) * l];
                    let gr = &g[r * l..(r + 1) * l];
                    let mut dot = T::zero();
                    for j in 0..l {
                        dot += gr[j] * yr[j];
                    }
                    for j in 0..l {
                        d[r * l + j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(nodes, grads, x, d);
            }
            &Op::WeightedSum { states, weights } => {
                let s = nodes[states].value.shape();
                let (b, l, e) = (s[0], s[1], s[2]);
                let hv = nodes[states].value.data();
                let wv = nodes[weights].value.data();
                if nodes[states].requires_grad {
                    let mut d = vec![T::zero(); b * l * e];
                    for r in 0..b {
                        let gr = &g[r * e..(r + 1) * e];
                        for t in 0..l {
                            let w = wv[r * l + t];
                            let dst = &mut d[(r * l + t) * e..(r * l + t + 1) * e];
                            for (dv, &gv) in dst.iter_mut().zip(gr) {
                                *dv = w * gv;
                            }
                        }
                    }
                    accumulate(nodes, grads, states, d);
                }
                if nodes[weights].requires_grad {
                    let mut d = vec![T::zero(); b * l];
                    for r in 0..b {
                        let gr = &g[r * e..(r + 1) * e];
                        for t in 0..l {
                            let h = &hv[(r * l + t) * e..(r * l + t + 1) * e];
                            let mut s = T::zero();
                            for j in 0..e {
                                s += gr[j] * h[j];
                            }
                            d[r * l + t] = s;
                        }
                    }
                    accumulate(nodes, grads, weights, d);
                }
            }
            &Op::Unfold { input, height } => {
                let s = nodes[input].value.shape();
                let (b, l, e) = (s[0], s[1], s[2]);
                let positions = l - height + 1;
                let width = height * e;
                let mut d = vec![T::zero(); b * l * e];
                for r in 0..b {
                    for p in 0..positions {
                        let src = &g[(r * positions + p) * width..(r * positions + p + 1) * width];
                        let dst = &mut d[(r * l + p) * e..(r * l + p + height) * e];
                        for (dv, &gv) in dst.iter_mut().zip(src) {
                            *dv += gv;
                        }
                    }
                }
                accumulate(nodes, grads, input, d);
            }
            Op::MaxSteps { input, argmax } => {
                let s = nodes[*input].value.shape();
                let (b, p, f) = (s[0], s[1], s[2]);
                let mut d = vec![T::zero(); b * p * f];
                for r in 0..b {
                    for c in 0..f {
                        let t = argmax[r * f + c];
                        d[(r * p + t) * f + c] = g[r * f + c];
                    }
                }
                accumulate(nodes, grads, *input, d);
            }
            Op::MeanSteps { input, lengths } => {
                let s = nodes[*input].value.shape();
                let (b, l, e) = (s[0], s[1], s[2]);
                let mut d = vec![T::zero(); b * l * e];
                for r in 0..b {
                    let n = T::lit(lengths[r] as f64);
                    for t in 0..lengths[r] {
                        for j in 0..e {
                            d[(r * l + t) * e + j] = g[r * e + j] / n;
                        }
                    }
                }
                accumulate(nodes, grads, *input, d);
            }
        }
    }
}

fn rc<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    t.rows_cols()
}

/// Add a gradient contribution into the running buffer of node `idx`.
/// The first contribution is added onto zeros, so every gradient is built by
/// the same sequence of additions regardless of how the node was produced.
fn accumulate<T: Scalar>(
    nodes: &[Node<T>],
    grads: &mut [Option<Vec<T>>],
    idx: usize,
    contribution: Vec<T>,
) {
    if !nodes[idx].requires_grad {
        return;
    }
    match &mut grads[idx] {
        Some(buf) => {
            for (a, v) in buf.iter_mut().zip(&contribution) {
                *a += *v;
            }
        }
        slot @ None => {
            let mut buf = contribution;
            for v in buf.iter_mut() {
                *v = T::zero() + *v;
            }
            *slot = Some(buf);
        }
    }
}
