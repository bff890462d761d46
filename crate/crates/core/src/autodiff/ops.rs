use crate::autodiff::tape::{Op, Tape, Var};
use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Elementwise operation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pointwise {
    Tanh,
    Sigmoid,
    Relu,
    Add,
    Mul,
}

/// Logit assigned to padded positions before a masked softmax.
pub const MASK_LOGIT: f64 = -1e9;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        msg: msg.into(),
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Numerically stable row softmax of a `B×C` matrix.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = logits.rows_cols();
    let x = logits.data();
    let mut out = Vec::with_capacity(x.len());
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let mut sum = T::zero();
        for &e in &exps {
            sum += e;
        }
        out.extend(exps.into_iter().map(|e| e / sum));
    }
    Tensor::new(logits.shape(), out).expect("softmax keeps shape")
}

impl<T: Scalar> Tape<T> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (self.nodes[ia].value.shape(), self.nodes[ib].value.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.nodes[ia].value.data();
        let bv = self.nodes[ib].value.data();
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let orow = &mut out[r * n..(r + 1) * n];
            for p in 0..k {
                let x = av[r * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for j in 0..n {
                    orow[j] += x * brow[j];
                }
            }
        }
        let value = Tensor::new(&[m, n], out)?;
        Ok(self.push(value, Op::MatMul(ia, ib), &[ia, ib]))
    }

    pub fn pointwise(&mut self, kind: Pointwise, args: &[Var]) -> Result<Var, TensorError> {
        let arity = match kind {
            Pointwise::Add | Pointwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(invalid("pointwise", format!("{kind:?} takes {arity} args")));
        }
        if arity == 2 {
            let (ia, ib) = (self.check(args[0])?, self.check(args[1])?);
            let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
            if va.shape() != vb.shape() {
                return Err(shape_err("pointwise", va.shape(), vb.shape()));
            }
            let (data, op): (Vec<T>, _) = match kind {
                Pointwise::Add => (
                    va.data()
                        .iter()
                        .zip(vb.data())
                        .map(|(&x, &y)| x + y)
                        .collect(),
                    Op::Add(ia, ib),
                ),
                _ => (
                    va.data()
                        .iter()
                        .zip(vb.data())
                        .map(|(&x, &y)| x * y)
                        .collect(),
                    Op::Mul(ia, ib),
                ),
            };
            let value = Tensor::new(va.shape(), data)?;
            return Ok(self.push(value, op, &[ia, ib]));
        }
        let ix = self.check(args[0])?;
        let vx = &self.nodes[ix].value;
        let f: fn(T) -> T = match kind {
            Pointwise::Tanh => |v| v.tanh(),
            Pointwise::Sigmoid => sigmoid,
            _ => |v| if v > T::zero() { v } else { T::zero() },
        };
        let value = Tensor::new(vx.shape(), vx.data().iter().map(|&v| f(v)).collect())?;
        let op = match kind {
            Pointwise::Tanh => Op::Tanh(ix),
            Pointwise::Sigmoid => Op::Sigmoid(ix),
            _ => Op::Relu(ix),
        };
        Ok(self.push(value, op, &[ix]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.pointwise(Pointwise::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.pointwise(Pointwise::Mul, &[a, b])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.pointwise(Pointwise::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.pointwise(Pointwise::Sigmoid, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.pointwise(Pointwise::Relu, &[x])
    }

    /// Add a bias vector to every row (over the last axis) of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (ix, ib) = (self.check(x)?, self.check(bias)?);
        let (vx, vb) = (&self.nodes[ix].value, &self.nodes[ib].value);
        let (_, cols) = vx.rows_cols();
        if vb.len() != cols {
            return Err(shape_err("add_bias", vx.shape(), vb.shape()));
        }
        let b = vb.data();
        let data = vx
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &w)| v + w))
            .collect();
        let value = Tensor::new(vx.shape(), data)?;
        Ok(self.push(value, Op::AddBias(ix, ib), &[ix, ib]))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let mut s = T::zero();
        for &v in self.nodes[ix].value.data() {
            s += v;
        }
        Ok(self.push(Tensor::scalar(s), Op::Sum(ix), &[ix]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let idx: Vec<usize> = parts
            .iter()
            .map(|&p| self.check(p))
            .collect::<Result<_, _>>()?;
        let first = match idx.first() {
            Some(&i) => self.nodes[i].value.shape().to_vec(),
            None => return Err(invalid("concat", "no parts")),
        };
        if axis >= first.len() {
            return Err(invalid(
                "concat",
                format!("axis {axis} out of range for rank {}", first.len()),
            ));
        }
        let mut total = 0;
        for &i in &idx {
            let s = self.nodes[i].value.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(ax, (a, b))| ax == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", &first, s));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &i in &idx {
                let extent = self.nodes[i].value.shape()[axis];
                let block = extent * inner;
                data.extend_from_slice(&self.nodes[i].value.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: idx.clone(),
                axis,
            },
            &idx,
        ))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let vx = &self.nodes[ix].value;
        let (rows, cols) = vx.rows_cols();
        if start + len > cols || len == 0 {
            return Err(invalid(
                "slice_last",
                format!("{start}+{len} exceeds width {cols}"),
            ));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&vx.data()[r * cols + start..r * cols + start + len]);
        }
        let mut shape = vx.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(value, Op::SliceLast { input: ix, start }, &[ix]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let value = self.nodes[ix].value.clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(ix), &[ix]))
    }

    /// Mean cross-entropy of `B×C` logits against class indices, plus the
    /// softmax probabilities.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<(Var, Tensor<T>), TensorError> {
        let il = self.check(logits)?;
        let vl = &self.nodes[il].value;
        if vl.rank() != 2 || vl.shape()[0] != labels.len() || labels.is_empty() {
            return Err(shape_err(
                "softmax_cross_entropy",
                vl.shape(),
                &[labels.len()],
            ));
        }
        let classes = vl.shape()[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(TensorError::Label {
                label: bad,
                classes,
            });
        }
        let probs = softmax_rows(vl);
        let x = vl.data();
        let mut total = T::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &x[r * classes..(r + 1) * classes];
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = T::zero();
            for &v in row {
                sum += (v - max).exp();
            }
            let log_prob = row[label] - max - sum.ln();
            total += -log_prob;
        }
        let loss = total / T::lit(labels.len() as f64);
        let op = Op::SoftmaxXent {
            logits: il,
            labels: labels.to_vec(),
            probs: probs.data().to_vec(),
        };
        Ok((self.push(Tensor::scalar(loss), op, &[il]), probs))
    }

    /// Row gather: `ids` (`B×L`, row-major) into a `V×E` table gives `B×L×E`.
    pub fn gather(
        &mut self,
        table: Var,
        ids: &[usize],
        batch: usize,
        steps: usize,
    ) -> Result<Var, TensorError> {
        let it = self.check(table)?;
        let vt = &self.nodes[it].value;
        if vt.rank() != 2 || ids.len() != batch * steps {
            return Err(shape_err("gather", vt.shape(), &[batch, steps]));
        }
        let (vocab, dim) = (vt.shape()[0], vt.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(TensorError::TokenId { id, vocab });
            }
            data.extend_from_slice(&vt.data()[id * dim..(id + 1) * dim]);
        }
        let value = Tensor::new(&[batch, steps, dim], data)?;
        let op = Op::Gather {
            table: it,
            ids: ids.to_vec(),
        };
        Ok(self.push(value, op, &[it]))
    }

    /// Slice step `t` out of a `B×L×E` tensor.
    pub fn select_step(&mut self, x: Var, step: usize) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let vx = &self.nodes[ix].value;
        if vx.rank() != 3 || step >= vx.shape()[1] {
            return Err(invalid(
                "select_step",
                format!("step {step} of {:?}", vx.shape()),
            ));
        }
        let (b, l, e) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let mut data = Vec::with_capacity(b * e);
        for r in 0..b {
            data.extend_from_slice(&vx.data()[(r * l + step) * e..(r * l + step + 1) * e]);
        }
        let value = Tensor::new(&[b, e], data)?;
        Ok(self.push(value, Op::SelectStep { input: ix, step }, &[ix]))
    }

    /// Stack `L` tensors of shape `B×E` into `B×L×E`.
    pub fn stack_steps(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let idx: Vec<usize> = parts
            .iter()
            .map(|&p| self.check(p))
            .collect::<Result<_, _>>()?;
        let first = match idx.first() {
            Some(&i) => self.nodes[i].value.shape().to_vec(),
            None => return Err(invalid("stack_steps", "no parts")),
        };
        if first.len() != 2 {
            return Err(invalid("stack_steps", "parts must be B×E"));
        }
        for &i in &idx {
            if self.nodes[i].value.shape() != first.as_slice() {
                return Err(shape_err(
                    "stack_steps",
                    &first,
                    self.nodes[i].value.shape(),
                ));
            }
        }
        let (b, e, l) = (first[0], first[1], idx.len());
        let mut data = Vec::with_capacity(b * l * e);
        for r in 0..b {
            for &i in &idx {
                data.extend_from_slice(&self.nodes[i].value.data()[r * e..(r + 1) * e]);
            }
        }
        let value = Tensor::new(&[b, l, e], data)?;
        Ok(self.push(value, Op::StackSteps(idx.clone()), &idx))
    }

    /// Row-wise select: row `r` comes from `on` when `keep[r]`, else from `off`.
    pub fn row_select(&mut self, keep: &[bool], on: Var, off: Var) -> Result<Var, TensorError> {
        let (ia, ib) = (self.check(on)?, self.check(off)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.shape() != vb.shape() || va.rank() != 2 || va.shape()[0] != keep.len() {
            return Err(shape_err("row_select", va.shape(), vb.shape()));
        }
        let cols = va.shape()[1];
        let mut data = Vec::with_capacity(va.len());
        for (r, &k) in keep.iter().enumerate() {
            let src = if k { va } else { vb };
            data.extend_from_slice(&src.data()[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::new(va.shape(), data)?;
        let op = Op::RowSelect {
            keep: keep.to_vec(),
            on: ia,
            off: ib,
        };
        Ok(self.push(value, op, &[ia, ib]))
    }

    /// Softmax over each row of a `B×L` score matrix, restricted to the first
    /// `lengths[r]` positions; the rest get [`MASK_LOGIT`] before normalizing.
    pub fn masked_softmax(&mut self, scores: Var, lengths: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(scores)?;
        let vx = &self.nodes[ix].value;
        if vx.rank() != 2 || vx.shape()[0] != lengths.len() {
            return Err(shape_err("masked_softmax", vx.shape(), &[lengths.len()]));
        }
        let l = vx.shape()[1];
        if let Some(r) = lengths.iter().position(|&n| n == 0 || n > l) {
            return Err(invalid(
                "masked_softmax",
                format!("row {r} has length {} of {l}", lengths[r]),
            ));
        }
        let mask = T::lit(MASK_LOGIT);
        let mut data = Vec::with_capacity(vx.len());
        for (r, &n) in lengths.iter().enumerate() {
            let row: Vec<T> = (0..l)
                .map(|j| if j < n { vx.data()[r * l + j] } else { mask })
                .collect();
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let mut sum = T::zero();
            for &e in &exps {
                sum += e;
            }
            data.extend(exps.into_iter().map(|e| e / sum));
        }
        let value = Tensor::new(vx.shape(), data)?;
        Ok(self.push(value, Op::MaskedSoftmax(ix), &[ix]))
    }

    /// `out[b] = Σ_t weights[b,t] · states[b,t,:]`.
    pub fn weighted_sum(&mut self, states: Var, weights: Var) -> Result<Var, TensorError> {
        let (ih, iw) = (self.check(states)?, self.check(weights)?);
        let (vh, vw) = (&self.nodes[ih].value, &self.nodes[iw].value);
        if vh.rank() != 3 || vw.shape() != &vh.shape()[..2] {
            return Err(shape_err("weighted_sum", vh.shape(), vw.shape()));
        }
        let (b, l, e) = (vh.shape()[0], vh.shape()[1], vh.shape()[2]);
        let mut data = vec![T::zero(); b * e];
        for r in 0..b {
            let out = &mut data[r * e..(r + 1) * e];
            for t in 0..l {
                let w = vw.data()[r * l + t];
                let h = &vh.data()[(r * l + t) * e..(r * l + t + 1) * e];
                for (o, &hv) in out.iter_mut().zip(h) {
                    *o += w * hv;
                }
            }
        }
        let value = Tensor::new(&[b, e], data)?;
        let op = Op::WeightedSum {
            states: ih,
            weights: iw,
        };
        Ok(self.push(value, op, &[ih, iw]))
    }

    /// Sliding windows of `height` consecutive steps: `B×L×E` to
    /// `(B·P)×(height·E)` with `P = L - height + 1`.
    pub fn unfold(&mut self, x: Var, height: usize) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let vx = &self.nodes[ix].value;
        if vx.rank() != 3 || height == 0 || height > vx.shape()[1] {
            return Err(invalid(
                "unfold",
                format!("height {height} over {:?}", vx.shape()),
            ));
        }
        let (b, l, e) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let positions = l - height + 1;
        let mut data = Vec::with_capacity(b * positions * height * e);
        for r in 0..b {
            for p in 0..positions {
                data.extend_from_slice(&vx.data()[(r * l + p) * e..(r * l + p + height) * e]);
            }
        }
        let value = Tensor::new(&[b * positions, height * e], data)?;
        Ok(self.push(value, Op::Unfold { input: ix, height }, &[ix]))
    }

    /// Max over the first `valid[b]` steps of a `B×P×F` tensor. Ties go to the
    /// earliest step.
    pub fn max_steps(&mut self, x: Var, valid: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let vx = &self.nodes[ix].value;
        if vx.rank() != 3 || vx.shape()[0] != valid.len() {
            return Err(shape_err("max_steps", vx.shape(), &[valid.len()]));
        }
        let (b, p, f) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if let Some(r) = valid.iter().position(|&n| n == 0 || n > p) {
            return Err(invalid(
                "max_steps",
                format!("row {r} has {} of {p} steps", valid[r]),
            ));
        }
        let mut data = Vec::with_capacity(b * f);
        let mut argmax = Vec::with_capacity(b * f);
        for r in 0..b {
            for c in 0..f {
                let mut best = 0;
                let mut best_val = vx.data()[r * p * f + c];
                for t in 1..valid[r] {
                    let v = vx.data()[(r * p + t) * f + c];
                    if v > best_val {
                        best = t;
                        best_val = v;
                    }
                }
                data.push(best_val);
                argmax.push(best);
            }
        }
        let value = Tensor::new(&[b, f], data)?;
        Ok(self.push(value, Op::MaxSteps { input: ix, argmax }, &[ix]))
    }

    /// Mean over the first `lengths[b]` steps of a `B×L×E` tensor.
    pub fn mean_steps(&mut self, x: Var, lengths: &[usize]) -> Result<Var, TensorError> {
        let ix = self.check(x)?;
        let vx = &self.nodes[ix].value;
        if vx.rank() != 3 || vx.shape()[0] != lengths.len() {
            return Err(shape_err("mean_steps", vx.shape(), &[lengths.len()]));
        }
        let (b, l, e) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        if let Some(r) = lengths.iter().position(|&n| n == 0 || n > l) {
            return Err(invalid(
                "mean_steps",
                format!("row {r} has length {} of {l}", lengths[r]),
            ));
        }
        let mut data = vec![T::zero(); b * e];
        for r in 0..b {
            let out = &mut data[r * e..(r + 1) * e];
            for t in 0..lengths[r] {
                for (o, &v) in out
                    .iter_mut()
                    .zip(&vx.data()[(r * l + t) * e..(r * l + t + 1) * e])
                {
                    *o += v;
                }
            }
            let n = T::lit(lengths[r] as f64);
            out.iter_mut().for_each(|o| *o = *o / n);
        }
        let value = Tensor::new(&[b, e], data)?;
        let op = Op::MeanSteps {
            input: ix,
            lengths: lengths.to_vec(),
        };
        Ok(self.push(value, op, &[ix]))
    }
}
