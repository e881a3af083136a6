//! Reverse-mode automatic differentiation over rank-2 tensors.
//!
//! A [`Tape`] records every operation in execution order. Node indices grow
//! monotonically, so a single reverse sweep visits each node exactly once and
//! all consumers of a node have already pushed their contributions when it is
//! reached. Fan-out is handled by additive accumulation.

use crate::error::{Result, TensorError};
use crate::params::{ParamGrads, ParamId, ParamStore};
use crate::tensor::{gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

#[derive(Clone, Copy)]
enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Elu,
    Softplus,
    Relu,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Tensor),
    Unary(Var, Unary),
    Min(Var, Var),
    Softmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Select(Var, Vec<usize>),
    Reshape(Var),
    Embedding(ParamId, Vec<usize>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Option<Vec<f64>>,
        probs: Tensor,
    },
    BceLogits {
        logits: Var,
        targets: Tensor,
        mask: Option<Tensor>,
    },
    LinComb(Vec<(f64, Var)>),
    LstmCell { gates: Var, cell: Var },
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation so that [`Tape::backward`] can differentiate
/// it. Parameters are borrowed from a [`ParamStore`] without copying.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of a backward sweep.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    pub params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to a recorded node; `None` when no gradient
    /// reached it (constants, unused inputs).
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

fn shape_err(op: &str, a: [usize; 2], b: [usize; 2]) -> TensorError {
    TensorError::Shape(format!(
        "{op}: incompatible shapes {}x{} and {}x{}",
        a[0], a[1], b[0], b[1]
    ))
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

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        z += *d;
    }
    for d in dst.iter_mut() {
        *d /= z;
    }
}

/// Broadcast classification of `b` against `a`.
#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn bcast(a: [usize; 2], b: [usize; 2]) -> Option<Bcast> {
    if a == b {
        Some(Bcast::Same)
    } else if b == [1, 1] {
        Some(Bcast::Scalar)
    } else if b[0] == 1 && b[1] == a[1] {
        Some(Bcast::Row)
    } else if b[1] == 1 && b[0] == a[0] {
        Some(Bcast::Col)
    } else {
        None
    }
}

#[inline]
fn bidx(kind: Bcast, cols: usize, r: usize, c: usize) -> usize {
    match kind {
        Bcast::Same => r * cols + c,
        Bcast::Row => c,
        Bcast::Col => r,
        Bcast::Scalar => 0,
    }
}

fn reduce_to(kind: Bcast, g: &Tensor, shape: [usize; 2]) -> Tensor {
    if kind == Bcast::Same {
        return g.clone();
    }
    let mut out = Tensor::zeros(shape[0], shape[1]);
    let cols = g.cols();
    for r in 0..g.rows() {
        for c in 0..cols {
            out.data_mut()[bidx(kind, cols, r, c)] += g.get(r, c);
        }
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient (truncated backpropagation).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    /// Trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// A parameter's current value used as a constant (no gradient).
    pub fn frozen_param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id).clone();
        self.constant(t)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let (m, k) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != k2 {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(self.value(a), ta, self.value(b), tb, &mut out, 0.0);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul { a, b, ta, tb }, ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, false)
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false, true)
    }

    /// `aᵀ · b`
    pub fn t_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true, false)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str) -> Result<(Bcast, Tensor)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let kind = bcast(sa, sb).ok_or_else(|| shape_err(name, sa, sb))?;
        let va = self.value(a);
        let vb = self.value(b);
        let f: fn(f64, f64) -> f64 = match name {
            "add" => |x, y| x + y,
            "sub" => |x, y| x - y,
            _ => |x, y| x * y,
        };
        let mut out = Tensor::zeros(sa[0], sa[1]);
        if kind == Bcast::Same {
            for ((o, &x), &y) in out.data_mut().iter_mut().zip(va.data()).zip(vb.data()) {
                *o = f(x, y);
            }
        } else {
            let cols = sa[1];
            let od = out.data_mut();
            for r in 0..sa[0] {
                for c in 0..cols {
                    od[r * cols + c] = f(va.get(r, c), vb.data()[bidx(kind, cols, r, c)]);
                }
            }
        }
        Ok((kind, out))
    }

    /// Elementwise sum; `b` may broadcast as a row, a column or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, out) = self.binary(a, b, "add")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, out) = self.binary(a, b, "sub")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, out) = self.binary(a, b, "mul")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    /// Elementwise product with a constant tensor (dropout masks, feature masks).
    pub fn mul_const(&mut self, a: Var, mask: Tensor) -> Result<Var> {
        let sa = self.shape(a);
        if sa != mask.shape() {
            return Err(shape_err("mul_const", sa, mask.shape()));
        }
        let out = self.value(a).zip_map(&mask, |x, m| x * m);
        let ng = self.ng(a);
        Ok(self.push(out, Op::MulConst(a, mask), ng))
    }

    fn unary(&mut self, a: Var, u: Unary) -> Var {
        let f: fn(f64) -> f64 = match u {
            Unary::Tanh => f64::tanh,
            Unary::Sigmoid => sigmoid,
            Unary::Exp => f64::exp,
            Unary::Log => |x| x.max(1e-300).ln(),
            Unary::Elu => |x| if x > 0.0 { x } else { x.exp_m1() },
            Unary::Softplus => softplus,
            Unary::Relu => |x| x.max(0.0),
        };
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, Op::Unary(a, u), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    /// Natural logarithm, floored at `1e-300` to stay finite.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Elu)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Softplus)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    /// Elementwise minimum of two equally shaped tensors.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("min", sa, sb));
        }
        let out = self.value(a).zip_map(self.value(b), f64::min);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Min(a, b), ng))
    }

    /// Softmax over each row.
    pub fn softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = Tensor::zeros(va.rows(), va.cols());
        for r in 0..va.rows() {
            softmax_row(va.row_slice(r), out.row_slice_mut(r));
        }
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a), ng)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = Tensor::zeros(va.rows(), va.cols());
        for r in 0..va.rows() {
            let row = va.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for (o, &x) in out.row_slice_mut(r).iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmax(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Sums across columns, giving an `r × 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::column((0..va.rows()).map(|r| va.row_slice(r).iter().sum()).collect());
        let ng = self.ng(a);
        self.push(out, Op::SumRows(a), ng)
    }

    /// Sums down rows, giving a `1 × c` row.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut out = vec![0.0; va.cols()];
        for r in 0..va.rows() {
            for (o, x) in out.iter_mut().zip(va.row_slice(r)) {
                *o += x;
            }
        }
        let ng = self.ng(a);
        self.push(Tensor::row(out), Op::SumCols(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p)[0]);
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(shape_err("concat_cols", self.shape(parts[0]), s));
            }
            cols += s[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            let w = v.cols();
            for r in 0..rows {
                out.row_slice_mut(r)[off..off + w].copy_from_slice(v.row_slice(r));
            }
            off += w;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.shape(p)[1]);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[1] != cols {
                return Err(shape_err("concat_rows", self.shape(parts[0]), s));
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s[1] {
            return Err(TensorError::Shape(format!(
                "slice_cols {start}..{} of {}x{}",
                start + len,
                s[0],
                s[1]
            )));
        }
        let va = self.value(a);
        let mut out = Tensor::zeros(s[0], len);
        for r in 0..s[0] {
            out.row_slice_mut(r)
                .copy_from_slice(&va.row_slice(r)[start..start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceCols(a, start), ng))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if start + len > s[0] {
            return Err(TensorError::Shape(format!(
                "slice_rows {start}..{} of {}x{}",
                start + len,
                s[0],
                s[1]
            )));
        }
        let out = Tensor::from_vec(
            len,
            s[1],
            self.value(a).data()[start * s[1]..(start + len) * s[1]].to_vec(),
        )?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::SliceRows(a, start), ng))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    /// Builds a matrix from (possibly repeated) rows of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= s[0]) {
            return Err(TensorError::Shape(format!(
                "gather_rows index {bad} out of {} rows",
                s[0]
            )));
        }
        let va = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * s[1]);
        for &i in idx {
            data.extend_from_slice(va.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), s[1], data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// Picks elements by flat row-major index into a `1 × k` row.
    pub fn select(&mut self, a: Var, flat: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = flat.iter().find(|&&i| i >= va.len()) {
            return Err(TensorError::Shape(format!(
                "select index {bad} out of {} elements",
                va.len()
            )));
        }
        let out = Tensor::row(flat.iter().map(|&i| va.data()[i]).collect());
        let ng = self.ng(a);
        Ok(self.push(out, Op::Select(a, flat.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshaped(rows, cols)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Rows of an embedding table parameter.
    pub fn embedding(&mut self, table: ParamId, idx: &[usize]) -> Result<Var> {
        let t = self.params.get(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(TensorError::Shape(format!(
                "embedding index {bad} out of {} rows",
                t.rows()
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), t.cols(), data)?;
        Ok(self.push(out, Op::Embedding(table, idx.to_vec()), true))
    }

    /// Summed softmax cross-entropy: one target class per row of `logits`,
    /// optionally weighted per row.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let v = self.value(logits);
        if targets.len() != v.rows() || weights.is_some_and(|w| w.len() != v.rows()) {
            return Err(TensorError::Shape(format!(
                "cross_entropy: {} targets for {} rows",
                targets.len(),
                v.rows()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v.cols()) {
            return Err(TensorError::Shape(format!(
                "cross_entropy target {bad} out of {} classes",
                v.cols()
            )));
        }
        let mut probs = Tensor::zeros(v.rows(), v.cols());
        let mut loss = 0.0;
        for r in 0..v.rows() {
            let row = v.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let w = weights.map_or(1.0, |w| w[r]);
            loss -= w * (row[targets[r]] - lse);
            softmax_row(row, probs.row_slice_mut(r));
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
                probs,
            },
            ng,
        ))
    }

    /// Summed binary cross-entropy on logits against 0/1 targets, with an
    /// optional 0/1 (or weight) mask.
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        targets: Tensor,
        mask: Option<Tensor>,
    ) -> Result<Var> {
        let s = self.shape(logits);
        if targets.shape() != s || mask.as_ref().is_some_and(|m| m.shape() != s) {
            return Err(shape_err("bce_with_logits", s, targets.shape()));
        }
        let v = self.value(logits);
        let mut loss = 0.0;
        for (i, (&x, &t)) in v.data().iter().zip(targets.data()).enumerate() {
            let w = mask.as_ref().map_or(1.0, |m| m.data()[i]);
            if w != 0.0 {
                loss += w * (x.max(0.0) - x * t + (-x.abs()).exp().ln_1p());
            }
        }
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceLogits {
                logits,
                targets,
                mask,
            },
            ng,
        ))
    }

    /// `Σ cᵢ·xᵢ` over equally shaped terms.
    pub fn lin_comb(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let Some(&(_, first)) = terms.first() else {
            return Ok(self.scalar(0.0));
        };
        let s = self.shape(first);
        let mut out = Tensor::zeros(s[0], s[1]);
        for &(c, v) in terms {
            let sv = self.shape(v);
            if sv != s {
                return Err(shape_err("lin_comb", s, sv));
            }
            for (o, x) in out.data_mut().iter_mut().zip(self.value(v).data()) {
                *o += c * x;
            }
        }
        let ng = terms.iter().any(|&(_, v)| self.ng(v));
        Ok(self.push(out, Op::LinComb(terms.to_vec()), ng))
    }

    /// Fused LSTM cell. `gates` holds pre-activations `[i f g o]` (each of
    /// width `H`) per row and `cell` the previous cell state. Returns `[h c]`
    /// of width `2H`.
    pub fn lstm_cell(&mut self, gates: Var, cell: Var) -> Result<Var> {
        let sg = self.shape(gates);
        let sc = self.shape(cell);
        if sg[0] != sc[0] || sg[1] != 4 * sc[1] {
            return Err(shape_err("lstm_cell", sg, sc));
        }
        let h = sc[1];
        let z = self.value(gates);
        let cp = self.value(cell);
        let mut out = Tensor::zeros(sg[0], 2 * h);
        for r in 0..sg[0] {
            let zr = z.row_slice(r);
            let cr = cp.row_slice(r);
            let o_row = out.row_slice_mut(r);
            for k in 0..h {
                let i = sigmoid(zr[k]);
                let f = sigmoid(zr[h + k]);
                let g = zr[2 * h + k].tanh();
                let o = sigmoid(zr[3 * h + k]);
                let c = f * cr[k] + i * g;
                o_row[k] = o * c.tanh();
                o_row[h + k] = c;
            }
        }
        let ng = self.ng(gates) || self.ng(cell);
        Ok(self.push(out, Op::LstmCell { gates, cell }, ng))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        let mut pgrads = ParamGrads::new(self.params.len());
        let s = self.shape(loss);
        grads[loss.0] = Some(Tensor::full(s[0], s[1], 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(i, &g, &mut grads, &mut pgrads);
            grads[i] = Some(g);
        }
        Gradients {
            nodes: grads,
            params: pgrads,
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        pgrads: &mut ParamGrads,
    ) {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Param(id) => pgrads.accumulate(*id, g),
            Op::MatMul { a, b, ta, tb } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut da = Tensor::zeros(va.rows(), va.cols());
                    match (ta, tb) {
                        (false, false) => gemm(g, false, vb, true, &mut da, 0.0),
                        (false, true) => gemm(g, false, vb, false, &mut da, 0.0),
                        (true, false) => gemm(vb, false, g, true, &mut da, 0.0),
                        (true, true) => gemm(vb, true, g, true, &mut da, 0.0),
                    }
                    self.acc(grads, *a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(vb.rows(), vb.cols());
                    match (ta, tb) {
                        (false, false) => gemm(va, true, g, false, &mut db, 0.0),
                        (false, true) => gemm(g, true, va, false, &mut db, 0.0),
                        (true, false) => gemm(va, false, g, false, &mut db, 0.0),
                        (true, true) => gemm(g, true, va, true, &mut db, 0.0),
                    }
                    self.acc(grads, *b, db);
                }
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                self.acc(grads, *a, g.clone());
                if self.ng(*b) {
                    let sb = self.shape(*b);
                    let kind = bcast(self.shape(*a), sb).expect("checked in forward");
                    let mut db = reduce_to(kind, g, sb);
                    if sign < 0.0 {
                        db.scale_assign(-1.0);
                    }
                    self.acc(grads, *b, db);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let kind = bcast(va.shape(), vb.shape()).expect("checked in forward");
                let cols = va.cols();
                if self.ng(*a) {
                    let mut da = Tensor::zeros(va.rows(), cols);
                    for r in 0..va.rows() {
                        for c in 0..cols {
                            da.set(r, c, g.get(r, c) * vb.data()[bidx(kind, cols, r, c)]);
                        }
                    }
                    self.acc(grads, *a, da);
                }
                if self.ng(*b) {
                    let prod = g.zip_map(va, |x, y| x * y);
                    self.acc(grads, *b, reduce_to(kind, &prod, vb.shape()));
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.map(|x| x * s)),
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::MulConst(a, m) => self.acc(grads, *a, g.zip_map(m, |x, y| x * y)),
            Op::Unary(a, u) => {
                let va = self.value(*a);
                let d = match u {
                    Unary::Tanh => g.zip_map(out, |g, y| g * (1.0 - y * y)),
                    Unary::Sigmoid => g.zip_map(out, |g, y| g * y * (1.0 - y)),
                    Unary::Exp => g.zip_map(out, |g, y| g * y),
                    Unary::Log => g.zip_map(va, |g, x| g / x.max(1e-300)),
                    Unary::Elu => g.zip_map(va, |g, x| if x > 0.0 { g } else { g * x.exp() }),
                    Unary::Softplus => g.zip_map(va, |g, x| g * sigmoid(x)),
                    Unary::Relu => {
                        g.zip_map(va, |g, x| if x > 0.0 { g } else { 0.0 })
                    }
                };
                self.acc(grads, *a, d);
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for k in 0..g.len() {
                    if va.data()[k] <= vb.data()[k] {
                        db.data_mut()[k] = 0.0;
                    } else {
                        da.data_mut()[k] = 0.0;
                    }
                }
                self.acc(grads, *a, da);
                self.acc(grads, *b, db);
            }
            Op::Softmax(a) => {
                let mut d = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let gr = g.row_slice(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (k, dv) in d.row_slice_mut(r).iter_mut().enumerate() {
                        *dv = y[k] * (gr[k] - dot);
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::LogSoftmax(a) => {
                let mut d = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row_slice(r);
                    let gr = g.row_slice(r);
                    let gs: f64 = gr.iter().sum();
                    for (k, dv) in d.row_slice_mut(r).iter_mut().enumerate() {
                        *dv = gr[k] - y[k].exp() * gs;
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::SumAll(a) => {
                let s = self.shape(*a);
                self.acc(grads, *a, Tensor::full(s[0], s[1], g.item()));
            }
            Op::SumRows(a) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    d.row_slice_mut(r).iter_mut().for_each(|x| *x = g.data()[r]);
                }
                self.acc(grads, *a, d);
            }
            Op::SumCols(a) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                for r in 0..s[0] {
                    d.row_slice_mut(r).copy_from_slice(g.data());
                }
                self.acc(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if self.ng(p) {
                        let mut d = Tensor::zeros(s[0], s[1]);
                        for r in 0..s[0] {
                            d.row_slice_mut(r)
                                .copy_from_slice(&g.row_slice(r)[off..off + s[1]]);
                        }
                        self.acc(grads, p, d);
                    }
                    off += s[1];
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let s = self.shape(p);
                    if self.ng(p) {
                        let d = Tensor::from_vec(
                            s[0],
                            s[1],
                            g.data()[off * s[1]..(off + s[0]) * s[1]].to_vec(),
                        )
                        .expect("slice matches shape");
                        self.acc(grads, p, d);
                    }
                    off += s[0];
                }
            }
            Op::SliceCols(a, start) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                let w = g.cols();
                for r in 0..s[0] {
                    d.row_slice_mut(r)[*start..*start + w].copy_from_slice(g.row_slice(r));
                }
                self.acc(grads, *a, d);
            }
            Op::SliceRows(a, start) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                d.data_mut()[start * s[1]..start * s[1] + g.len()].copy_from_slice(g.data());
                self.acc(grads, *a, d);
            }
            Op::GatherRows(a, idx) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                for (k, &r) in idx.iter().enumerate() {
                    for (x, y) in d.row_slice_mut(r).iter_mut().zip(g.row_slice(k)) {
                        *x += y;
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::Select(a, flat) => {
                let s = self.shape(*a);
                let mut d = Tensor::zeros(s[0], s[1]);
                for (k, &f) in flat.iter().enumerate() {
                    d.data_mut()[f] += g.data()[k];
                }
                self.acc(grads, *a, d);
            }
            Op::Reshape(a) => {
                let s = self.shape(*a);
                self.acc(grads, *a, g.clone().reshaped(s[0], s[1]).expect("same size"));
            }
            Op::Embedding(table, idx) => {
                let t = self.params.get(*table);
                let mut d = Tensor::zeros(t.rows(), t.cols());
                for (k, &r) in idx.iter().enumerate() {
                    for (x, y) in d.row_slice_mut(r).iter_mut().zip(g.row_slice(k)) {
                        *x += y;
                    }
                }
                pgrads.accumulate_owned(*table, d);
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let gs = g.item();
                let mut d = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[r]);
                    let row = d.row_slice_mut(r);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= w * gs);
                }
                self.acc(grads, *logits, d);
            }
            Op::BceLogits {
                logits,
                targets,
                mask,
            } => {
                let gs = g.item();
                let v = self.value(*logits);
                let mut d = Tensor::zeros(v.rows(), v.cols());
                for (k, dv) in d.data_mut().iter_mut().enumerate() {
                    let w = mask.as_ref().map_or(1.0, |m| m.data()[k]);
                    *dv = gs * w * (sigmoid(v.data()[k]) - targets.data()[k]);
                }
                self.acc(grads, *logits, d);
            }
            Op::LinComb(terms) => {
                for &(c, v) in terms {
                    self.acc(grads, v, g.map(|x| x * c));
                }
            }
            Op::LstmCell { gates, cell } => {
                let z = self.value(*gates);
                let cp = self.value(*cell);
                let h = cp.cols();
                let mut dz = Tensor::zeros(z.rows(), z.cols());
                let mut dcp = Tensor::zeros(cp.rows(), h);
                for r in 0..z.rows() {
                    let zr = z.row_slice(r);
                    let cr = cp.row_slice(r);
                    let gr = g.row_slice(r);
                    let orow = out.row_slice(r);
                    let dzr = dz.row_slice_mut(r);
                    let mut dcr = vec![0.0; h];
                    for k in 0..h {
                        let ig = sigmoid(zr[k]);
                        let fg = sigmoid(zr[h + k]);
                        let gg = zr[2 * h + k].tanh();
                        let og = sigmoid(zr[3 * h + k]);
                        let c = orow[h + k];
                        let tc = c.tanh();
                        let dh = gr[k];
                        let dc = gr[h + k] + dh * og * (1.0 - tc * tc);
                        dzr[k] = dc * gg * ig * (1.0 - ig);
                        dzr[h + k] = dc * cr[k] * fg * (1.0 - fg);
                        dzr[2 * h + k] = dc * ig * (1.0 - gg * gg);
                        dzr[3 * h + k] = dh * tc * og * (1.0 - og);
                        dcr[k] = dc * fg;
                    }
                    dcp.row_slice_mut(r).copy_from_slice(&dcr);
                }
                self.acc(grads, *gates, dz);
                self.acc(grads, *cell, dcp);
            }
        }
    }
}
