//! Dynamic reverse-mode tape.
//!
//! Every primitive appends one node holding its output value and the
//! handles of its operands, so nodes are stored in topological order by
//! construction. `backward` walks the nodes in reverse once.

use super::tensor::{matmul_a_bt_into, matmul_at_b_into, Tensor};
use crate::error::{invalid, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Div(Var, Var, Bcast),
    Maximum(Var, Var, Bcast),
    Neg(Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    RepeatRows(Var),
    RepeatCols(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Softmax(Var),
    LogSumExp(Var),
    Sum(Var),
    Mean(Var),
    RowSums(Var),
    L2Norm(Var),
    PairwiseDist(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to requires-grad leaves.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the leaf does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn bcast(op: &str, a: &Tensor, b: &Tensor) -> Result<(Vec<usize>, Bcast)> {
    if a.shape() == b.shape() {
        Ok((a.shape().to_vec(), Bcast::Same))
    } else if a.len() == 1 && b.len() == 1 {
        // [] vs [1, 1]: keep the higher-rank shape
        if a.ndim() >= b.ndim() {
            Ok((a.shape().to_vec(), Bcast::RightScalar))
        } else {
            Ok((b.shape().to_vec(), Bcast::LeftScalar))
        }
    } else if a.len() == 1 {
        Ok((b.shape().to_vec(), Bcast::LeftScalar))
    } else if b.len() == 1 {
        Ok((a.shape().to_vec(), Bcast::RightScalar))
    } else {
        invalid(format!("{op}: shape mismatch {:?} vs {:?}", a.shape(), b.shape()))
    }
}

#[inline]
fn at(data: &[f64], i: usize) -> f64 {
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn binary(
        &mut self,
        name: &str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(Var, Var, Bcast) -> Op,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (shape, kind) = bcast(name, va, vb)?;
        let n: usize = shape.iter().product();
        let (da, db) = (va.data(), vb.data());
        let data = (0..n).map(|i| f(at(da, i), at(db, i))).collect();
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, make(a, b, kind), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("maximum", a, b, f64::max, Op::Maximum)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Shift(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.ndim() != 2 {
            return invalid(format!("transpose needs a 2-D tensor, got {:?}", va.shape()));
        }
        let value = va.transpose();
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    fn require_2d(&self, name: &str, a: Var) -> Result<(usize, usize)> {
        let s = self.value(a).shape();
        if s.len() != 2 {
            return invalid(format!("{name} needs a 2-D tensor, got {s:?}"));
        }
        Ok((s[0], s[1]))
    }

    /// Concatenation along the last axis of 2-D tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return invalid("concat of zero tensors");
        }
        let rows = self.require_2d("concat", parts[0])?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.require_2d("concat", p)?;
            if r != rows {
                return invalid(format!(
                    "concat: shape mismatch {:?} vs {:?}",
                    self.value(parts[0]).shape(),
                    self.value(p).shape()
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.require_2d("slice_cols", a)?;
        if start >= end || end > cols {
            return invalid(format!("slice_cols {start}..{end} out of range for {cols} columns"));
        }
        let va = self.value(a);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&va.row_slice(r)[start..end]);
        }
        let value = Tensor::matrix(rows, end - start, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Rows gathered by index (indices may repeat).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (rows, _) = self.require_2d("select_rows", a)?;
        if let Some(bad) = idx.iter().find(|&&i| i >= rows) {
            return invalid(format!("select_rows index {bad} out of range for {rows} rows"));
        }
        let value = self.value(a).select_rows(idx);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SelectRows(a, idx.to_vec()), rg))
    }

    /// `[1, c]` -> `[n, c]` by copying the row.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.require_2d("repeat_rows", a)?;
        if r != 1 {
            return invalid(format!("repeat_rows needs a [1, c] tensor, got [{r}, {c}]"));
        }
        let row = self.value(a).data();
        let mut data = Vec::with_capacity(n * c);
        for _ in 0..n {
            data.extend_from_slice(row);
        }
        let value = Tensor::matrix(n, c, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::RepeatRows(a), rg))
    }

    /// `[r, 1]` -> `[r, n]` by copying the column.
    pub fn repeat_cols(&mut self, a: Var, n: usize) -> Result<Var> {
        let (r, c) = self.require_2d("repeat_cols", a)?;
        if c != 1 {
            return invalid(format!("repeat_cols needs a [r, 1] tensor, got [{r}, {c}]"));
        }
        let col = self.value(a).data();
        let mut data = Vec::with_capacity(r * n);
        for &v in col {
            data.extend(std::iter::repeat_n(v, n));
        }
        let value = Tensor::matrix(r, n, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::RepeatCols(a), rg))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let c = va.cols();
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Log-sum-exp over the last axis of a 2-D tensor, giving `[rows, 1]`.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var> {
        let (rows, _) = self.require_2d("logsumexp", a)?;
        let va = self.value(a);
        let data = (0..rows).map(|r| lse(va.row_slice(r))).collect();
        let value = Tensor::matrix(rows, 1, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::LogSumExp(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Tensor::scalar(va.sum() / va.len() as f64);
        let rg = self.rg(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    /// Sum over the last axis of a 2-D tensor, giving `[rows, 1]`.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let (rows, _) = self.require_2d("row_sums", a)?;
        let va = self.value(a);
        let data = (0..rows).map(|r| va.row_slice(r).iter().sum()).collect();
        let value = Tensor::matrix(rows, 1, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::RowSums(a), rg))
    }

    /// Euclidean norm of all entries.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum_squares().sqrt());
        let rg = self.rg(&[a]);
        self.push(value, Op::L2Norm(a), rg)
    }

    /// Euclidean distances between rows: `[n, d] x [m, d] -> [n, m]`.
    pub fn pairwise_dist(&mut self, p: Var, q: Var) -> Result<Var> {
        let (n, d) = self.require_2d("pairwise_dist", p)?;
        let (m, d2) = self.require_2d("pairwise_dist", q)?;
        if d != d2 {
            return invalid(format!("pairwise_dist: shape mismatch [{n}, {d}] vs [{m}, {d2}]"));
        }
        let (vp, vq) = (self.value(p), self.value(q));
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let pi = vp.row_slice(i);
            for j in 0..m {
                let qj = vq.row_slice(j);
                let s: f64 = pi.iter().zip(qj).map(|(a, b)| (a - b) * (a - b)).sum();
                data.push(s.sqrt());
            }
        }
        let value = Tensor::matrix(n, m, data)?;
        let rg = self.rg(&[p, q]);
        Ok(self.push(value, Op::PairwiseDist(p, q), rg))
    }

    /// Reverse sweep from a one-element loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return invalid(format!("backward needs a scalar loss, got shape {:?}", lv.shape()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        let mut out: Vec<Option<Tensor>> = Vec::new();
        out.resize_with(self.nodes.len(), || None);
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads: out });
        }
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Op::Leaf = node.op {
                out[i] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
            } else {
                self.propagate(node, &g, &mut grads);
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, k) => {
                self.acc_bcast(grads, *a, *k, true, y.len(), |i| g[i]);
                self.acc_bcast(grads, *b, *k, false, y.len(), |i| g[i]);
            }
            Op::Sub(a, b, k) => {
                self.acc_bcast(grads, *a, *k, true, y.len(), |i| g[i]);
                self.acc_bcast(grads, *b, *k, false, y.len(), |i| -g[i]);
            }
            Op::Mul(a, b, k) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                self.acc_bcast(grads, *a, *k, true, y.len(), |i| g[i] * at(db, i));
                self.acc_bcast(grads, *b, *k, false, y.len(), |i| g[i] * at(da, i));
            }
            Op::Div(a, b, k) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                self.acc_bcast(grads, *a, *k, true, y.len(), |i| g[i] / at(db, i));
                self.acc_bcast(grads, *b, *k, false, y.len(), |i| {
                    let bv = at(db, i);
                    -g[i] * at(da, i) / (bv * bv)
                });
            }
            Op::Maximum(a, b, k) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                self.acc_bcast(grads, *a, *k, true, y.len(), |i| if at(da, i) >= at(db, i) { g[i] } else { 0.0 });
                self.acc_bcast(grads, *b, *k, false, y.len(), |i| if at(da, i) >= at(db, i) { 0.0 } else { g[i] });
            }
            Op::Neg(a) => self.acc(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o -= v)),
            Op::Scale(a, s) => {
                self.acc(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o += s * v))
            }
            Op::Shift(a) => self.acc(grads, *a, |ga| ga.iter_mut().zip(g).for_each(|(o, v)| *o += v)),
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                self.acc(grads, *a, |ga| matmul_a_bt_into(g, vb.data(), ga, m, n, k));
                self.acc(grads, *b, |gb| matmul_at_b_into(va.data(), g, gb, m, k, n));
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                // output is [r, c]; input is [c, r]
                self.acc(grads, *a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.acc(grads, p, |gp| {
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, w) = (node.value.rows(), node.value.cols());
                let cols = self.value(*a).cols();
                self.acc(grads, *a, |ga| {
                    for r in 0..rows {
                        for c in 0..w {
                            ga[r * cols + start + c] += g[r * w + c];
                        }
                    }
                });
            }
            Op::SelectRows(a, idx) => {
                let c = node.value.cols();
                self.acc(grads, *a, |ga| {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..c {
                            ga[src * c + j] += g[r * c + j];
                        }
                    }
                });
            }
            Op::RepeatRows(a) => {
                let c = node.value.cols();
                self.acc(grads, *a, |ga| {
                    for row in g.chunks(c) {
                        ga.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::RepeatCols(a) => {
                let n = node.value.cols();
                self.acc(grads, *a, |ga| {
                    for (o, row) in ga.iter_mut().zip(g.chunks(n)) {
                        *o += row.iter().sum::<f64>();
                    }
                });
            }
            Op::Tanh(a) => self.acc(grads, *a, |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }),
            Op::Sigmoid(a) => self.acc(grads, *a, |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }),
            Op::Exp(a) => self.acc(grads, *a, |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * y[i];
                }
            }),
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / x[i];
                    }
                })
            }
            Op::Sqrt(a) => self.acc(grads, *a, |ga| {
                for i in 0..ga.len() {
                    ga[i] += g[i] * 0.5 / y[i];
                }
            }),
            Op::Square(a) => {
                let x = self.value(*a).data();
                self.acc(grads, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += 2.0 * x[i] * g[i];
                    }
                })
            }
            Op::Softmax(a) => {
                let c = node.value.cols();
                self.acc(grads, *a, |ga| {
                    for ((gr, yr), out) in g.chunks(c).zip(y.chunks(c)).zip(ga.chunks_mut(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(u, v)| u * v).sum();
                        for j in 0..c {
                            out[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                })
            }
            Op::LogSumExp(a) => {
                let x = self.value(*a);
                let c = x.cols();
                self.acc(grads, *a, |ga| {
                    for (r, out) in ga.chunks_mut(c).enumerate() {
                        let xr = x.row_slice(r);
                        for j in 0..c {
                            out[j] += g[r] * (xr[j] - y[r]).exp();
                        }
                    }
                })
            }
            Op::Sum(a) => self.acc(grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.acc(grads, *a, |ga| ga.iter_mut().for_each(|o| *o += g[0] / n))
            }
            Op::RowSums(a) => {
                let c = self.value(*a).cols();
                self.acc(grads, *a, |ga| {
                    for (r, out) in ga.chunks_mut(c).enumerate() {
                        out.iter_mut().for_each(|o| *o += g[r]);
                    }
                })
            }
            Op::L2Norm(a) => {
                let x = self.value(*a).data();
                let norm = y[0];
                if norm > 0.0 {
                    self.acc(grads, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[0] * x[i] / norm;
                        }
                    })
                }
            }
            Op::PairwiseDist(p, q) => {
                let (vp, vq) = (self.value(*p), self.value(*q));
                let (n, d) = (vp.rows(), vp.cols());
                let m = vq.rows();
                // d(dist_ij)/dp_i = (p_i - q_j) / dist_ij; zero at coincident points.
                let coef = |i: usize, j: usize| {
                    let dist = y[i * m + j];
                    if dist > 0.0 {
                        g[i * m + j] / dist
                    } else {
                        0.0
                    }
                };
                self.acc(grads, *p, |gp| {
                    for i in 0..n {
                        for j in 0..m {
                            let s = coef(i, j);
                            if s == 0.0 {
                                continue;
                            }
                            for k in 0..d {
                                gp[i * d + k] += s * (vp.get(i, k) - vq.get(j, k));
                            }
                        }
                    }
                });
                self.acc(grads, *q, |gq| {
                    for i in 0..n {
                        for j in 0..m {
                            let s = coef(i, j);
                            if s == 0.0 {
                                continue;
                            }
                            for k in 0..d {
                                gq[j * d + k] -= s * (vp.get(i, k) - vq.get(j, k));
                            }
                        }
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let buf = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(buf);
    }

    /// Accumulates elementwise gradient `f(i)` (indexed over the output) into
    /// an operand, summing when that operand was scalar-broadcast.
    fn acc_bcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        v: Var,
        kind: Bcast,
        left: bool,
        n_out: usize,
        f: impl Fn(usize) -> f64,
    ) {
        let scalar_operand =
            matches!((kind, left), (Bcast::LeftScalar, true) | (Bcast::RightScalar, false));
        self.acc(grads, v, |gv| {
            if scalar_operand {
                gv[0] += (0..n_out).map(&f).sum::<f64>();
            } else {
                for (i, o) in gv.iter_mut().enumerate() {
                    *o += f(i);
                }
            }
        });
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn lse(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
