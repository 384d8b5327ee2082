//! Reverse-mode differentiation over [`Tensor2`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are
//! appended in evaluation order, so the node list is already a topological
//! order and [`Graph::backward`] simply walks it from the loss down to the
//! first leaf. Graphs are built per forward pass and dropped afterwards.

use crate::diff::tensor::{self, LayerNormCache, Tensor2};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    TMatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    MaskedSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, cache: LayerNormCache },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
    Bce { pred: Var, labels: Vec<f64>, active: Vec<bool> },
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
}

/// Clamp applied to predictions before taking logs in the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor2>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Inputs and parameters both enter the graph as leaves.
    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`backward`](Self::backward) loss with respect
    /// to `v`; zeros when `v` did not influence the loss.
    pub fn grad(&self, v: Var) -> Tensor2 {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[v.0].value.shape();
                Tensor2::zeros(r, c)
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    /// `a^T * b`.
    pub fn t_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).t_matmul(self.value(b))?;
        Ok(self.push(v, Op::TMatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let v = self.value(x).add_row(self.value(bias))?;
        Ok(self.push(v, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let v = self.value(x).scale(k);
        self.push(v, Op::Scale(x, k))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_row(h, b)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = tensor::relu(self.value(x));
        self.push(v, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = tensor::sigmoid(self.value(x));
        self.push(v, Op::Sigmoid(x))
    }

    /// The mask is a constant; it receives no gradient.
    pub fn masked_softmax_rows(&mut self, scores: Var, mask: &Tensor2) -> Result<Var> {
        let v = tensor::masked_softmax_rows(self.value(scores), mask)?;
        Ok(self.push(v, Op::MaskedSoftmax(scores)))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (v, cache) =
            tensor::layer_norm(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(v, Op::LayerNorm { x, gain, bias, cache }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let v = {
            let vals: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor2::concat_cols(&vals)?
        };
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x).slice_cols(start, len)?;
        Ok(self.push(v, Op::SliceCols(x, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let v = {
            let vals: Vec<&Tensor2> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor2::concat_rows(&vals)?
        };
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    /// Row selection; covers permutation, cyclic shift, slicing and tiling.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let v = self.value(x).gather_rows(indices)?;
        Ok(self.push(v, Op::GatherRows(x, indices.to_vec())))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).mean_rows()?;
        Ok(self.push(v, Op::MeanRows(x)))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = Tensor2::scalar(self.value(x).sum());
        self.push(v, Op::SumAll(x))
    }

    /// Mean binary cross entropy of `pred` (any shape, one prediction per
    /// entry) against `labels`. Predictions are clamped to
    /// `[BCE_CLAMP, 1 - BCE_CLAMP]`; clamped entries pass no gradient.
    pub fn bce_mean(&mut self, pred: Var, labels: &[f64]) -> Result<Var> {
        let p = self.value(pred);
        if p.is_empty() {
            return Err(Error::Contract("bce over an empty batch".into()));
        }
        if p.len() != labels.len() {
            return Err(Error::dim("bce_mean", p.shape(), (labels.len(), 1)));
        }
        let n = p.len() as f64;
        let mut total = 0.0;
        let mut active = Vec::with_capacity(labels.len());
        for (&pv, &y) in p.data().iter().zip(labels) {
            let c = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            active.push(c == pv);
            total += y * c.ln() + (1.0 - y) * (1.0 - c).ln();
        }
        let v = Tensor2::scalar(-total / n);
        Ok(self.push(v, Op::Bce { pred, labels: labels.to_vec(), active }))
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!("backward needs a 1x1 loss, got {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads)?;
            grads[i] = Some(dy);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, dy: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = dy.matmul_t(self.value(*b))?;
                let db = self.value(*a).t_matmul(dy)?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::MatMulT(a, b) => {
                let da = dy.matmul(self.value(*b))?;
                let db = dy.t_matmul(self.value(*a))?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::TMatMul(a, b) => {
                let da = self.value(*b).matmul_t(dy)?;
                let db = self.value(*a).matmul(dy)?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, dy.clone())?;
                accumulate(grads, *b, dy.clone())?;
            }
            Op::AddRow(x, bias) => {
                accumulate(grads, *x, dy.clone())?;
                accumulate(grads, *bias, column_sums(dy))?;
            }
            Op::Scale(x, k) => accumulate(grads, *x, dy.scale(*k))?,
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut dx = dy.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if *v <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::Sigmoid(x) => {
                let mut dx = dy.clone();
                for (d, s) in dx.data_mut().iter_mut().zip(node.value.data()) {
                    *d *= s * (1.0 - s);
                }
                accumulate(grads, *x, dx)?;
            }
            Op::MaskedSoftmax(x) => {
                let y = &node.value;
                let mut dx = Tensor2::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = dy.row(r);
                    let inner = tensor::dot(yr, dr);
                    for ((o, yv), dv) in dx.row_mut(r).iter_mut().zip(yr).zip(dr) {
                        *o = yv * (dv - inner);
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::LayerNorm { x, gain, bias, cache } => {
                let g = self.value(*gain);
                let (rows, cols) = dy.shape();
                let n = cols as f64;
                let mut dx = Tensor2::zeros(rows, cols);
                let mut dgain = vec![0.0; cols];
                let mut dbias = vec![0.0; cols];
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let dr = dy.row(r);
                    let xh = cache.normalized.row(r);
                    for j in 0..cols {
                        dgain[j] += dr[j] * xh[j];
                        dbias[j] += dr[j];
                        dxhat[j] = dr[j] * g.data()[j];
                    }
                    let sum_d: f64 = dxhat.iter().sum();
                    let sum_dx: f64 = tensor::dot(&dxhat, xh);
                    let k = cache.inv_std[r] / n;
                    for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                        *o = k * (n * dxhat[j] - sum_d - xh[j] * sum_dx);
                    }
                }
                accumulate(grads, *x, dx)?;
                accumulate(grads, *gain, Tensor2::row_vector(dgain))?;
                accumulate(grads, *bias, Tensor2::row_vector(dbias))?;
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    accumulate(grads, *p, dy.slice_cols(start, w)?)?;
                    start += w;
                }
            }
            Op::SliceCols(x, start) => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Tensor2::zeros(rows, cols);
                let w = dy.cols();
                for r in 0..rows {
                    dx.row_mut(r)[*start..*start + w].copy_from_slice(dy.row(r));
                }
                accumulate(grads, *x, dx)?;
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = self.value(*p).rows();
                    accumulate(grads, *p, dy.slice_rows(start, h))?;
                    start += h;
                }
            }
            Op::GatherRows(x, indices) => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Tensor2::zeros(rows, cols);
                for (k, &src) in indices.iter().enumerate() {
                    for (o, d) in dx.row_mut(src).iter_mut().zip(dy.row(k)) {
                        *o += d;
                    }
                }
                accumulate(grads, *x, dx)?;
            }
            Op::MeanRows(x) => {
                let (rows, cols) = self.value(*x).shape();
                let inv = 1.0 / rows as f64;
                let d = dy.row(0);
                let dx = Tensor2::from_fn(rows, cols, |_, j| d[j] * inv);
                accumulate(grads, *x, dx)?;
            }
            Op::SumAll(x) => {
                let (rows, cols) = self.value(*x).shape();
                accumulate(grads, *x, Tensor2::filled(rows, cols, dy.get(0, 0)))?;
            }
            Op::Bce { pred, labels, active } => {
                let p = self.value(*pred);
                let n = p.len() as f64;
                let scale = dy.get(0, 0) / n;
                let mut dp = Tensor2::zeros(p.rows(), p.cols());
                for (k, (d, &pv)) in dp.data_mut().iter_mut().zip(p.data()).enumerate() {
                    if active[k] {
                        let y = labels[k];
                        *d = -scale * (y / pv - (1.0 - y) / (1.0 - pv));
                    }
                }
                accumulate(grads, *pred, dp)?;
            }
        }
        Ok(())
    }
}

fn column_sums(t: &Tensor2) -> Tensor2 {
    let mut out = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        for (o, v) in out.iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    Tensor2::row_vector(out)
}

fn accumulate(grads: &mut [Option<Tensor2>], v: Var, g: Tensor2) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
