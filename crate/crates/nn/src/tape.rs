//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. `backward` walks
//! the nodes in reverse insertion order, which is a valid topological order
//! because inputs always precede their consumers.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{mismatch, NnError, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operation with a user supplied backward rule.
pub trait UnaryOp {
    fn name(&self) -> &'static str;
    fn forward(&self, x: &Tensor) -> Tensor;
    /// Gradient with respect to `x` given the forward output `y` and the
    /// upstream gradient.
    fn backward(&self, x: &Tensor, y: &Tensor, grad: &Tensor) -> Tensor;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    StandardizeRows(Var, f64),
    Custom(Var, Rc<dyn UnaryOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'s> {
    store: Option<&'s ParamStore>,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Tensor>>,
    macs: u64,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same length")
}

fn row_softmax(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

fn row_logsumexp(x: &Tensor) -> Vec<f64> {
    let c = x.cols();
    x.data()
        .chunks(c.max(1))
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store: Some(store), nodes: Vec::new(), params: HashMap::new(), grads: Vec::new(), macs: 0 }
    }

    /// A tape without parameters, for pure tensor computations.
    pub fn detached() -> Tape<'static> {
        Tape { store: None, nodes: Vec::new(), params: HashMap::new(), grads: Vec::new(), macs: 0 }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store.expect("tape has no parameter store")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulate operations performed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value that takes no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that collects a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = self.store().get(id);
        let v = self.push(p.value.clone(), Op::Leaf, p.trainable);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k || ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(mismatch("matmul", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        self.macs += (m * k * n) as u64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = zip(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn check_row(&self, op: &'static str, a: Var, row: Var) -> Result<()> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.numel() != ta.cols() || tr.rows() != 1 {
            return Err(mismatch(op, ta.shape(), tr.shape()));
        }
        Ok(())
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("add_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tr.data()[i % c];
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Multiplies every row of `a` elementwise by a `1 × c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row("mul_row", a, row)?;
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tr.data()[i % c];
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::MulRow(a, row), rg))
    }

    /// Multiplies row `i` of `a` by entry `i` of an `r × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (ta, tc) = (self.value(a), self.value(col));
        if tc.numel() != ta.rows() || tc.cols() != 1 {
            return Err(mismatch("mul_col", ta.shape(), tc.shape()));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tc.data()[i / c];
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(
            a,
            |x| if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) },
            Op::Sigmoid(a),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = row_softmax(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let lse = row_logsumexp(ta);
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v -= lse[i / c];
        }
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmaxRows(a), rg)
    }

    /// `log sum exp` of each row, as an `r × 1` column.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let lse = row_logsumexp(self.value(a));
        let rg = self.rg(a);
        let n = lse.len();
        self.push(Tensor::matrix(n, 1, lse), Op::LogSumExpRows(a), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| NnError::Invalid("concat_cols of nothing".into()))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", self.value(first).shape(), self.value(p).shape()));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, total, out), Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| NnError::Invalid("concat_rows of nothing".into()))?;
        let cols = self.value(first).cols();
        for &p in parts {
            if self.value(p).cols() != cols {
                return Err(mismatch("concat_rows", self.value(first).shape(), self.value(p).shape()));
            }
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / cols.max(1);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, cols, out), Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.rows() {
            return Err(NnError::Invalid(format!("slice_rows {start}..{} of shape {:?}", start + len, ta.shape())));
        }
        let c = ta.cols();
        let out = Tensor::matrix(len, c, ta.data()[start * c..(start + len) * c].to_vec());
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(NnError::Invalid(format!("slice_cols {start}..{} of shape {:?}", start + len, ta.shape())));
        }
        let mut out = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            out.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let rows = ta.rows();
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(rows, len, out), Op::SliceCols(a, start), rg))
    }

    /// Rows of `a` at `indices`, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= ta.rows()) {
            return Err(NnError::Invalid(format!("gather_rows index {bad} out of {} rows", ta.rows())));
        }
        let c = ta.cols();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(ta.row(i));
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(indices.len(), c, out), Op::GatherRows(a, indices.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums, `1 × c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = vec![0.0; c];
        for r in 0..ta.rows() {
            for (o, v) in out.iter_mut().zip(ta.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(1, c, out), Op::SumRows(a), rg)
    }

    /// Column means, `1 × c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let r = self.value(a).rows().max(1) as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / r)
    }

    /// Row sums, `r × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let out: Vec<f64> = (0..ta.rows()).map(|r| ta.row(r).iter().sum()).collect();
        let rg = self.rg(a);
        let n = out.len();
        self.push(Tensor::matrix(n, 1, out), Op::SumCols(a), rg)
    }

    /// `(x - mean) / sqrt(var + eps)` per row, population variance.
    pub fn standardize_rows(&mut self, a: Var, eps: f64) -> Var {
        let ta = self.value(a);
        let c = ta.cols();
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        }
        let rg = self.rg(a);
        self.push(out, Op::StandardizeRows(a, eps), rg)
    }

    pub fn custom(&mut self, a: Var, op: Rc<dyn UnaryOp>) -> Var {
        let out = op.forward(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::Custom(a, op), rg)
    }

    /// Reverse pass from a single-element node. Gradients of earlier passes
    /// are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(NnError::Invalid(format!("backward from non-scalar of shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, t: Tensor| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if nodes[a.0].requires_grad {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, false);
                    acc(*a, Tensor::matrix(m, k, da));
                }
                if nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, false);
                    acc(*b, Tensor::matrix(k, n, db));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(*a, zip(g, val(*b), |x, y| x * y));
                acc(*b, zip(g, val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, column_sums(g).reshaped(val(*row).shape()).expect("row shape"));
            }
            Op::MulRow(a, row) => {
                let (ta, tr) = (val(*a), val(*row));
                let c = ta.cols();
                let mut da = g.clone();
                for (i, v) in da.data_mut().iter_mut().enumerate() {
                    *v *= tr.data()[i % c];
                }
                acc(*a, da);
                acc(*row, column_sums(&zip(g, ta, |x, y| x * y)).reshaped(tr.shape()).expect("row shape"));
            }
            Op::MulCol(a, col) => {
                let (ta, tc) = (val(*a), val(*col));
                let c = ta.cols();
                let mut da = g.clone();
                for (i, v) in da.data_mut().iter_mut().enumerate() {
                    *v *= tc.data()[i / c];
                }
                acc(*a, da);
                let prod = zip(g, ta, |x, y| x * y);
                let dc: Vec<f64> = (0..ta.rows()).map(|r| prod.row(r).iter().sum()).collect();
                acc(*col, Tensor::new(tc.shape().to_vec(), dc).expect("col shape"));
            }
            Op::Scale(a, f) => acc(*a, g.map(|v| v * f)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, zip(g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Sigmoid(a) => acc(*a, zip(g, y, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, zip(g, y, |g, y| g * (1.0 - y * y))),
            Op::Exp(a) => acc(*a, zip(g, y, |g, y| g * y)),
            Op::Log(a) => acc(*a, zip(g, val(*a), |g, x| g / x)),
            Op::SoftmaxRows(a) => {
                let c = y.cols();
                let mut d = g.clone();
                for (drow, (grow, yrow)) in
                    d.data_mut().chunks_mut(c).zip(g.data().chunks(c).zip(y.data().chunks(c)))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = yv * (gv - dot);
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let c = y.cols();
                let mut d = g.clone();
                for (drow, (grow, yrow)) in
                    d.data_mut().chunks_mut(c).zip(g.data().chunks(c).zip(y.data().chunks(c)))
                {
                    let total: f64 = grow.iter().sum();
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = gv - yv.exp() * total;
                    }
                }
                acc(*a, d);
            }
            Op::LogSumExpRows(a) => {
                let sm = row_softmax(val(*a));
                let c = sm.cols();
                let mut d = sm;
                for (i, v) in d.data_mut().iter_mut().enumerate() {
                    *v *= g.data()[i / c];
                }
                acc(*a, d);
            }
            Op::Transpose(a) => acc(*a, g.transpose().reshaped(val(*a).shape()).expect("transpose shape")),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut d = Vec::with_capacity(g.rows() * w);
                    for r in 0..g.rows() {
                        d.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    acc(p, Tensor::new(val(p).shape().to_vec(), d).expect("part shape"));
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    acc(p, Tensor::new(val(p).shape().to_vec(), g.data()[offset..offset + n].to_vec()).expect("part"));
                    offset += n;
                }
            }
            Op::SliceRows(a, start) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.shape());
                d.data_mut()[start * c..start * c + g.numel()].copy_from_slice(g.data());
                acc(*a, d);
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (c, w) = (ta.cols(), g.cols());
                let mut d = Tensor::zeros(ta.shape());
                for r in 0..ta.rows() {
                    d.data_mut()[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                }
                acc(*a, d);
            }
            Op::GatherRows(a, idx) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.shape());
                for (k, &i) in idx.iter().enumerate() {
                    for (dv, gv) in d.data_mut()[i * c..(i + 1) * c].iter_mut().zip(g.row(k)) {
                        *dv += gv;
                    }
                }
                acc(*a, d);
            }
            Op::Reshape(a) => acc(*a, g.clone().reshaped(val(*a).shape()).expect("reshape back")),
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::SumRows(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.shape());
                for (i, v) in d.data_mut().iter_mut().enumerate() {
                    *v = g.data()[i % c];
                }
                acc(*a, d);
            }
            Op::SumCols(a) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.shape());
                for (i, v) in d.data_mut().iter_mut().enumerate() {
                    *v = g.data()[i / c];
                }
                acc(*a, d);
            }
            Op::StandardizeRows(a, eps) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = g.clone();
                for ((drow, xrow), (grow, yrow)) in d
                    .data_mut()
                    .chunks_mut(c)
                    .zip(ta.data().chunks(c))
                    .zip(g.data().chunks(c).zip(y.data().chunks(c)))
                {
                    let mean = xrow.iter().sum::<f64>() / c as f64;
                    let var = xrow.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = grow.iter().sum::<f64>() / c as f64;
                    let gy_mean = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = inv * (gv - g_mean - yv * gy_mean);
                    }
                }
                acc(*a, d);
            }
            Op::Custom(a, op) => acc(*a, op.backward(val(*a), y, g)),
        }
    }

    /// Gradients of every parameter touched by this tape.
    pub fn param_gradients(&self) -> Gradients {
        let mut out = Gradients::new(self.store.map_or(0, ParamStore::len));
        let mut ids: Vec<_> = self.params.iter().collect();
        ids.sort_by_key(|(id, _)| **id);
        for (&id, &v) in ids {
            if let Some(g) = self.grad(v) {
                out.accumulate(id, g);
            }
        }
        out
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Tensor::matrix(1, c, out)
}
