//! Reverse-mode automatic differentiation over a per-pass tape.
//!
//! A [`Tape`] records every operation of one forward pass. Nodes are appended
//! in evaluation order, so the tape is acyclic by construction and a single
//! reverse sweep visits each node after all of its consumers. Gradients
//! accumulate additively over fan-out.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::softmax_rows;
use crate::numerics::tensor::{matmul_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Silu(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    /// Winner source row per output element, `usize::MAX` when the segment is empty.
    SegmentExtreme(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extreme {
    Max,
    Min,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    matmuls: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of matrix products recorded so far.
    pub fn matmul_count(&self) -> usize {
        self.matmuls
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul {m}x{k} · {k2}x{n}");
        let mut out = Tensor::zeros(m, n);
        matmul_into(out.data_mut(), self.value(a).data(), self.value(b).data(), m, k, n);
        self.matmuls += 1;
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add");
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub");
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul");
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// `a (n x m) + bias (1 x m)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(bias), (1, m), "add_row");
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..n {
            for (o, bv) in out.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push(out, Op::AddRow(a, bias), rg)
    }

    /// Scales row `r` of `a (n x m)` by `col[r]` where `col` is `n x 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (n, _) = self.shape(a);
        assert_eq!(self.shape(col), (n, 1), "mul_col");
        let mut out = self.value(a).clone();
        let c = self.value(col).data().to_vec();
        for (r, &cv) in c.iter().enumerate() {
            for o in out.row_mut(r) {
                *o *= cv;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        let rg = self.rg(a);
        self.push(out, Op::Silu(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.shape(a).1, "slice_cols");
        let out = self.value(a).slice_cols(start, len);
        let rg = self.rg(a);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.shape(a).0, "slice_rows");
        let out = self.value(a).slice_rows(start, len);
        let rg = self.rg(a);
        self.push(out, Op::SliceRows(a, start), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&vals).expect("concat_cols row mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&vals).expect("concat_rows column mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Output row `i` is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Var {
        let out = self.value(a).gather_rows(index);
        let rg = self.rg(a);
        self.push(out, Op::GatherRows(a, index.clone()), rg)
    }

    /// Row `i` of `a` is added into output row `index[i]`; the output has `out_rows` rows.
    pub fn scatter_add(&mut self, a: Var, index: &Arc<[usize]>, out_rows: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows(), index.len(), "scatter_add");
        let cols = src.cols();
        let mut out = Tensor::zeros(out_rows, cols);
        for (i, &dst) in index.iter().enumerate() {
            let row = src.row(i);
            for (o, v) in out.row_mut(dst).iter_mut().zip(row) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::ScatterAdd(a, index.clone()), rg)
    }

    /// Elementwise max or min of the rows of `a` grouped by `index`. Empty groups yield zeros.
    /// Ties resolve to the lowest source row.
    pub fn segment_extreme(&mut self, a: Var, index: &[usize], out_rows: usize, kind: Extreme) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows(), index.len(), "segment_extreme");
        let cols = src.cols();
        let mut winners = vec![usize::MAX; out_rows * cols];
        let mut out = Tensor::zeros(out_rows, cols);
        for (i, &dst) in index.iter().enumerate() {
            for c in 0..cols {
                let v = src.get(i, c);
                let w = &mut winners[dst * cols + c];
                let better = *w == usize::MAX
                    || match kind {
                        Extreme::Max => v > out.get(dst, c),
                        Extreme::Min => v < out.get(dst, c),
                    };
                if better {
                    *w = i;
                    out.set(dst, c, v);
                }
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SegmentExtreme(a, winners), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::SumAll(a), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(out, Op::MeanAll(a), rg)
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Var {
        let t = self.constant(target.clone());
        let d = self.sub(pred, t);
        let sq = self.mul(d, d);
        self.mean_all(sq)
    }

    /// Mean cross-entropy of row-wise logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows(), labels.len(), "cross_entropy");
        let probs = softmax_rows(z);
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            assert!(y < z.cols(), "label {y} out of range");
            let row = z.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        let out = Tensor::scalar(loss / labels.len().max(1) as f64);
        let rg = self.rg(logits);
        self.push(out, Op::CrossEntropy { logits, labels: labels.into(), probs }, rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        if !self.value(loss).is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |v: Var, delta: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_t(self.value(*b)), grads);
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).t_matmul(g), grads);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.scale(-1.0), grads);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.zip_map(self.value(*b), |x, y| x * y), grads);
                }
                if self.rg(*b) {
                    acc(*b, g.zip_map(self.value(*a), |x, y| x * y), grads);
                }
            }
            Op::AddRow(a, bias) => {
                acc(*a, g.clone(), grads);
                if self.rg(*bias) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    acc(*bias, db, grads);
                }
            }
            Op::MulCol(a, col) => {
                let c = self.value(*col);
                if self.rg(*a) {
                    let mut da = g.clone();
                    for r in 0..da.rows() {
                        let cv = c.get(r, 0);
                        for x in da.row_mut(r) {
                            *x *= cv;
                        }
                    }
                    acc(*a, da, grads);
                }
                if self.rg(*col) {
                    let av = self.value(*a);
                    let mut dc = Tensor::zeros(c.rows(), 1);
                    for r in 0..c.rows() {
                        let s: f64 = g.row(r).iter().zip(av.row(r)).map(|(x, y)| x * y).sum();
                        dc.set(r, 0, s);
                    }
                    acc(*col, dc, grads);
                }
            }
            Op::Scale(a, k) => acc(*a, g.scale(*k), grads),
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }), grads);
            }
            Op::Tanh(a) => acc(*a, g.zip_map(out, |gv, y| gv * (1.0 - y * y)), grads),
            Op::Silu(a) => {
                let x = self.value(*a);
                acc(
                    *a,
                    g.zip_map(x, |gv, xv| {
                        let s = sigmoid(xv);
                        gv * s * (1.0 + xv * (1.0 - s))
                    }),
                    grads,
                );
            }
            Op::Transpose(a) => acc(*a, g.transpose(), grads),
            Op::SoftmaxRows(a) => {
                let mut da = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (d, (yv, gv)) in da.row_mut(r).iter_mut().zip(y.iter().zip(gr)) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*a, da, grads);
            }
            Op::SliceCols(a, start) => {
                let (n, m) = self.shape(*a);
                let mut da = Tensor::zeros(n, m);
                for r in 0..n {
                    da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, da, grads);
            }
            Op::SliceRows(a, start) => {
                let (n, m) = self.shape(*a);
                let mut da = Tensor::zeros(n, m);
                da.data_mut()[start * m..(start + g.rows()) * m].copy_from_slice(g.data());
                acc(*a, da, grads);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.rg(p) {
                        acc(p, g.slice_cols(off, w), grads);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let h = self.shape(p).0;
                    if self.rg(p) {
                        acc(p, g.slice_rows(off, h), grads);
                    }
                    off += h;
                }
            }
            Op::GatherRows(a, index) => {
                let (n, m) = self.shape(*a);
                let mut da = Tensor::zeros(n, m);
                for (i, &src) in index.iter().enumerate() {
                    for (d, v) in da.row_mut(src).iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                acc(*a, da, grads);
            }
            Op::ScatterAdd(a, index) => acc(*a, g.gather_rows(index), grads),
            Op::SegmentExtreme(a, winners) => {
                let (n, m) = self.shape(*a);
                let mut da = Tensor::zeros(n, m);
                let cols = g.cols();
                for (k, &w) in winners.iter().enumerate() {
                    if w != usize::MAX {
                        let c = k % cols;
                        let v = da.get(w, c) + g.data()[k];
                        da.set(w, c, v);
                    }
                }
                acc(*a, da, grads);
            }
            Op::SumAll(a) => {
                let (n, m) = self.shape(*a);
                acc(*a, Tensor::filled(n, m, g.item()), grads);
            }
            Op::MeanAll(a) => {
                let (n, m) = self.shape(*a);
                acc(*a, Tensor::filled(n, m, g.item() / (n * m).max(1) as f64), grads);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let n = labels.len().max(1) as f64;
                let mut d = probs.scale(g.item() / n);
                for (r, &y) in labels.iter().enumerate() {
                    let v = d.get(r, y) - g.item() / n;
                    d.set(r, y, v);
                }
                acc(*logits, d, grads);
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients of one backward sweep, indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of `v`, or zeros of the matching shape when `v` did not influence the loss.
    pub fn get(&self, tape: &Tape, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.shape(v);
                Tensor::zeros(r, c)
            }
        }
    }
}
