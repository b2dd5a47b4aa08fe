//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive in execution order. [`Var`] is a cheap
//! handle to one recorded value. [`Tape::backward`] walks the record in exact
//! reverse and returns the gradient of a scalar with respect to every node
//! that requires one.
//!
//! A tape is single-threaded. Independent tapes can live on separate threads.

use std::cell::{Ref, RefCell};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Transpose(usize),
    Exp(usize),
    Log(usize),
    LeakyRelu(usize, f64),
    Elu(usize),
    Sigmoid(usize),
    Clamp(usize, f64, f64),
    Softmax { input: usize, axis: usize },
    MaxPool { input: usize, argmax: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Dropout { input: usize, factors: Vec<f64> },
    GatherRows { input: usize, index: Vec<usize> },
    ScatterAddRows { input: usize, index: Vec<usize> },
    BceWithLogits { logits: usize, targets: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.tape.nodes.borrow()[self.id].value.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any flowed to it.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient with respect to `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes[var.id].clone()),
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, var: Var<'_>) -> Tensor {
        match self.grads[var.id].take() {
            Some(g) => g,
            None => Tensor::zeros(self.shapes[var.id].clone()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a trainable leaf (gradient is tracked).
    pub fn param(&self, value: &Tensor) -> Var<'_> {
        self.push(value.clone(), Op::Leaf, true)
    }

    /// Records a constant leaf (no gradient).
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Records a leaf taking ownership of `value`.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Runs reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(TensorError::ForeignVar);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Tensor::full(root.value.shape().to_vec(), 1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        grads.resize(nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| Tensor::zeros(nodes[id].value.shape().to_vec()));
    f(slot.data_mut());
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let gd = g.data();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let av = &nodes[*a].value;
            let bv = &nodes[*b].value;
            let (m, k) = av.dims2().expect("matmul lhs rank");
            let (_, n) = bv.dims2().expect("matmul rhs rank");
            accumulate(grads, nodes, *a, |da| {
                // dA = dC · Bᵀ
                for i in 0..m {
                    let grow = &gd[i * n..(i + 1) * n];
                    let drow = &mut da[i * k..(i + 1) * k];
                    for (kk, d) in drow.iter_mut().enumerate() {
                        let brow = &bv.data()[kk * n..(kk + 1) * n];
                        *d += dot(grow, brow);
                    }
                }
            });
            accumulate(grads, nodes, *b, |db| {
                // dB = Aᵀ · dC
                for i in 0..m {
                    let arow = &av.data()[i * k..(i + 1) * k];
                    let grow = &gd[i * n..(i + 1) * n];
                    for (kk, &aik) in arow.iter().enumerate() {
                        if aik != 0.0 {
                            axpy(aik, grow, &mut db[kk * n..(kk + 1) * n]);
                        }
                    }
                }
            });
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, |da| axpy(1.0, gd, da));
            accumulate(grads, nodes, *b, |db| axpy(1.0, gd, db));
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, |da| axpy(1.0, gd, da));
            accumulate(grads, nodes, *b, |db| axpy(-1.0, gd, db));
        }
        Op::Mul(a, b) => {
            let av = nodes[*a].value.data();
            let bv = nodes[*b].value.data();
            accumulate(grads, nodes, *a, |da| {
                for ((d, gi), bi) in da.iter_mut().zip(gd).zip(bv) {
                    *d += gi * bi;
                }
            });
            accumulate(grads, nodes, *b, |db| {
                for ((d, gi), ai) in db.iter_mut().zip(gd).zip(av) {
                    *d += gi * ai;
                }
            });
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, |da| axpy(*c, gd, da)),
        Op::AddScalar(a) => accumulate(grads, nodes, *a, |da| axpy(1.0, gd, da)),
        Op::AddRow(a, r) => {
            accumulate(grads, nodes, *a, |da| axpy(1.0, gd, da));
            let cols = nodes[*r].value.len();
            accumulate(grads, nodes, *r, |dr| {
                for grow in gd.chunks(cols) {
                    axpy(1.0, grow, dr);
                }
            });
        }
        Op::Concat { inputs, axis } => {
            let (rows, cols) = out.dims2().expect("concat rank");
            let mut offset = 0;
            for &inp in inputs {
                let (ir, ic) = nodes[inp].value.dims2().expect("concat rank");
                accumulate(grads, nodes, inp, |di| {
                    if *axis == 0 {
                        axpy(1.0, &gd[offset * cols..(offset + ir) * cols], di);
                    } else {
                        for r in 0..rows {
                            let src = &gd[r * cols + offset..r * cols + offset + ic];
                            axpy(1.0, src, &mut di[r * ic..(r + 1) * ic]);
                        }
                    }
                });
                offset += if *axis == 0 { ir } else { ic };
            }
        }
        Op::Transpose(a) => {
            let (r, c) = out.dims2().expect("transpose rank");
            accumulate(grads, nodes, *a, |da| {
                for i in 0..r {
                    for j in 0..c {
                        da[j * r + i] += gd[i * c + j];
                    }
                }
            });
        }
        Op::Exp(a) => accumulate(grads, nodes, *a, |da| {
            for ((d, gi), y) in da.iter_mut().zip(gd).zip(out.data()) {
                *d += gi * y;
            }
        }),
        Op::Log(a) => {
            let x = nodes[*a].value.data();
            accumulate(grads, nodes, *a, |da| {
                for ((d, gi), xi) in da.iter_mut().zip(gd).zip(x) {
                    *d += gi / xi;
                }
            })
        }
        Op::LeakyRelu(a, slope) => {
            let x = nodes[*a].value.data();
            accumulate(grads, nodes, *a, |da| {
                for ((d, gi), xi) in da.iter_mut().zip(gd).zip(x) {
                    *d += if *xi > 0.0 { *gi } else { gi * slope };
                }
            })
        }
        Op::Elu(a) => {
            let x = nodes[*a].value.data();
            accumulate(grads, nodes, *a, |da| {
                for (((d, gi), xi), yi) in da.iter_mut().zip(gd).zip(x).zip(out.data()) {
                    *d += if *xi > 0.0 { *gi } else { gi * (yi + 1.0) };
                }
            })
        }
        Op::Sigmoid(a) => accumulate(grads, nodes, *a, |da| {
            for ((d, gi), y) in da.iter_mut().zip(gd).zip(out.data()) {
                *d += gi * y * (1.0 - y);
            }
        }),
        Op::Clamp(a, lo, hi) => {
            let x = nodes[*a].value.data();
            accumulate(grads, nodes, *a, |da| {
                for ((d, gi), xi) in da.iter_mut().zip(gd).zip(x) {
                    if *xi >= *lo && *xi <= *hi {
                        *d += gi;
                    }
                }
            })
        }
        Op::Softmax { input, axis } => {
            let lanes = Lanes::new(out.shape(), *axis);
            let y = out.data();
            accumulate(grads, nodes, *input, |dx| {
                for lane in 0..lanes.count {
                    let mut inner = 0.0;
                    for k in 0..lanes.len {
                        let e = lanes.index(lane, k);
                        inner += gd[e] * y[e];
                    }
                    for k in 0..lanes.len {
                        let e = lanes.index(lane, k);
                        dx[e] += y[e] * (gd[e] - inner);
                    }
                }
            })
        }
        Op::MaxPool { input, argmax } => accumulate(grads, nodes, *input, |dx| {
            for (gi, &src) in gd.iter().zip(argmax) {
                dx[src] += gi;
            }
        }),
        Op::Sum(a) => {
            let gi = gd[0];
            accumulate(grads, nodes, *a, |da| da.iter_mut().for_each(|d| *d += gi))
        }
        Op::Mean(a) => {
            let n = nodes[*a].value.len() as f64;
            let gi = gd[0] / n;
            accumulate(grads, nodes, *a, |da| da.iter_mut().for_each(|d| *d += gi))
        }
        Op::Dropout { input, factors } => accumulate(grads, nodes, *input, |dx| {
            for ((d, gi), f) in dx.iter_mut().zip(gd).zip(factors) {
                *d += gi * f;
            }
        }),
        Op::GatherRows { input, index } => {
            let cols = out.shape()[1];
            accumulate(grads, nodes, *input, |dx| {
                for (i, &src) in index.iter().enumerate() {
                    axpy(1.0, &gd[i * cols..(i + 1) * cols], &mut dx[src * cols..(src + 1) * cols]);
                }
            })
        }
        Op::ScatterAddRows { input, index } => {
            let cols = out.shape()[1];
            accumulate(grads, nodes, *input, |dx| {
                for (i, &dst) in index.iter().enumerate() {
                    axpy(1.0, &gd[dst * cols..(dst + 1) * cols], &mut dx[i * cols..(i + 1) * cols]);
                }
            })
        }
        Op::BceWithLogits { logits, targets } => {
            let x = nodes[*logits].value.data();
            let scale = gd[0] / x.len() as f64;
            accumulate(grads, nodes, *logits, |dx| {
                for ((d, xi), t) in dx.iter_mut().zip(x).zip(targets) {
                    *d += scale * (sigmoid(*xi) - t);
                }
            })
        }
    }
}

/// Strided view of the lanes of a tensor along one axis.
struct Lanes {
    count: usize,
    len: usize,
    inner: usize,
}

impl Lanes {
    fn new(shape: &[usize], axis: usize) -> Self {
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        Self {
            count: outer * inner,
            len,
            inner,
        }
    }

    #[inline]
    fn index(&self, lane: usize, k: usize) -> usize {
        let o = lane / self.inner;
        let i = lane % self.inner;
        (o * self.len + k) * self.inner + i
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
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

/// `C = A · B` for row-major `A: m×k`, `B: k×n`.
pub fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik != 0.0 {
                axpy(aik, &b[kk * n..(kk + 1) * n], crow);
            }
        }
    }
    c
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the recorded value.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn same_tape(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    fn rg(&self) -> bool {
        self.requires_grad()
    }

    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'t>> {
        let value = f(&self.value())?;
        let rg = self.rg();
        Ok(self.tape.push(value, op, rg))
    }

    fn map(self, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        self.unary(op, |x| {
            Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
        })
    }

    fn zip(self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let a = self.value();
            let b = other.value();
            if a.shape() != b.shape() {
                return Err(TensorError::shape(name, a.shape(), b.shape()));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(value, op, rg))
    }

    /// Matrix product of rank-2 tensors.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let value = {
            let a = self.value();
            let b = other.value();
            let (m, k) = a.dims2()?;
            let (k2, n) = b.dims2()?;
            if k != k2 {
                return Err(TensorError::shape("matmul", a.shape(), b.shape()));
            }
            Tensor::new(vec![m, n], matmul_into(a.data(), b.data(), m, k, n))?
        };
        let rg = self.rg() || other.rg();
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn scale(self, factor: f64) -> Result<Var<'t>> {
        self.map(Op::Scale(self.id, factor), |v| v * factor)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>> {
        self.map(Op::AddScalar(self.id), |v| v + c)
    }

    /// Adds a `1 × n` row to every row of an `m × n` matrix (bias term).
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&row)?;
        let value = {
            let a = self.value();
            let r = row.value();
            let (_, n) = a.dims2()?;
            if r.shape() != [1, n] {
                return Err(TensorError::shape("add_row", a.shape(), r.shape()));
            }
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_mut(n) {
                axpy(1.0, r.data(), chunk);
            }
            out
        };
        let rg = self.rg() || row.rg();
        Ok(self.tape.push(value, Op::AddRow(self.id, row.id), rg))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        self.unary(Op::Transpose(self.id), |x| {
            let (r, c) = x.dims2()?;
            let mut data = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    data[j * r + i] = x.data()[i * c + j];
                }
            }
            Tensor::new(vec![c, r], data)
        })
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.map(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.map(Op::Log(self.id), f64::ln)
    }

    pub fn leaky_relu(self, slope: f64) -> Result<Var<'t>> {
        self.map(Op::LeakyRelu(self.id, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    /// ELU with α = 1.
    pub fn elu(self) -> Result<Var<'t>> {
        self.map(Op::Elu(self.id), |v| if v > 0.0 { v } else { v.exp_m1() })
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.map(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'t>> {
        self.map(Op::Clamp(self.id, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Softmax along `axis`. Entries where `mask` is `false` get probability
    /// exactly zero and receive no gradient.
    pub fn softmax(self, axis: usize, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            if axis >= x.rank() {
                return Err(TensorError::Axis {
                    axis,
                    shape: x.shape().to_vec(),
                });
            }
            if let Some(m) = mask {
                if m.len() != x.len() {
                    return Err(TensorError::shape("softmax mask", x.shape(), &[m.len()]));
                }
            }
            let keep = |e: usize| mask.is_none_or(|m| m[e]);
            let lanes = Lanes::new(x.shape(), axis);
            let xd = x.data();
            let mut out = vec![0.0; x.len()];
            for lane in 0..lanes.count {
                // NaN wins so that non-finite scores propagate to the output.
                let mut max: Option<f64> = None;
                for k in 0..lanes.len {
                    let e = lanes.index(lane, k);
                    if keep(e) {
                        let v = xd[e];
                        max = Some(match max {
                            Some(m) if m.is_nan() || m >= v => m,
                            _ => v,
                        });
                    }
                }
                let max = max.ok_or(TensorError::FullyMasked(lane))?;
                let mut total = 0.0;
                for k in 0..lanes.len {
                    let e = lanes.index(lane, k);
                    if keep(e) {
                        let v = (xd[e] - max).exp();
                        out[e] = v;
                        total += v;
                    }
                }
                for k in 0..lanes.len {
                    out[lanes.index(lane, k)] /= total;
                }
            }
            Tensor::new(x.shape().to_vec(), out)?
        };
        let rg = self.rg();
        Ok(self.tape.push(value, Op::Softmax { input: self.id, axis }, rg))
    }

    /// Maximum along `axis`, keeping that axis with length 1. The backward
    /// pass routes gradient only to the first maximizing position.
    pub fn max_pool(self, axis: usize) -> Result<Var<'t>> {
        let (value, argmax) = {
            let x = self.value();
            if axis >= x.rank() || x.shape()[axis] == 0 {
                return Err(TensorError::Axis {
                    axis,
                    shape: x.shape().to_vec(),
                });
            }
            let lanes = Lanes::new(x.shape(), axis);
            let mut shape = x.shape().to_vec();
            shape[axis] = 1;
            let mut out = Vec::with_capacity(lanes.count);
            let mut argmax = Vec::with_capacity(lanes.count);
            for lane in 0..lanes.count {
                let mut best = lanes.index(lane, 0);
                for k in 1..lanes.len {
                    let e = lanes.index(lane, k);
                    if x.data()[e] > x.data()[best] {
                        best = e;
                    }
                }
                out.push(x.data()[best]);
                argmax.push(best);
            }
            (Tensor::new(shape, out)?, argmax)
        };
        let rg = self.rg();
        Ok(self.tape.push(value, Op::MaxPool { input: self.id, argmax }, rg))
    }

    /// Sum of all elements (scalar).
    pub fn sum(self) -> Result<Var<'t>> {
        self.unary(Op::Sum(self.id), |x| Ok(Tensor::scalar(x.data().iter().sum())))
    }

    /// Mean of all elements (scalar).
    pub fn mean(self) -> Result<Var<'t>> {
        self.unary(Op::Mean(self.id), |x| {
            if x.is_empty() {
                return Err(TensorError::Invalid("mean of empty tensor".into()));
            }
            Ok(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
        })
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
    /// Identity when `train` is false or `rate` is zero.
    pub fn dropout(self, rate: f64, rng: &mut impl rand::Rng, train: bool) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 - rate;
        let n = self.value().len();
        let factors: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let value = {
            let x = self.value();
            let data = x.data().iter().zip(&factors).map(|(v, f)| v * f).collect();
            Tensor::new(x.shape().to_vec(), data)?
        };
        let rg = self.rg();
        Ok(self.tape.push(value, Op::Dropout { input: self.id, factors }, rg))
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of zero tensors".into()))?;
        if axis > 1 {
            return Err(TensorError::Axis {
                axis,
                shape: first.shape(),
            });
        }
        for p in parts {
            first.same_tape(p)?;
        }
        let value = {
            let vals: Vec<Ref<'_, Tensor>> = parts.iter().map(|p| p.value()).collect();
            let (r0, c0) = vals[0].dims2()?;
            let mut rows = 0;
            let mut cols = 0;
            for v in &vals {
                let (r, c) = v.dims2()?;
                if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                    return Err(TensorError::shape("concat", vals[0].shape(), v.shape()));
                }
                rows += r;
                cols += c;
            }
            if axis == 0 {
                let data = vals.iter().flat_map(|v| v.data().iter().copied()).collect();
                Tensor::new(vec![rows, c0], data)?
            } else {
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for v in &vals {
                        data.extend_from_slice(v.row_slice(r));
                    }
                }
                Tensor::new(vec![r0, cols], data)?
            }
        };
        let rg = parts.iter().any(Var::rg);
        let inputs = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.push(value, Op::Concat { inputs, axis }, rg))
    }

    /// Selects rows `index[i]` of a rank-2 tensor (repeats allowed).
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            let (rows, cols) = x.dims2()?;
            let mut data = Vec::with_capacity(index.len() * cols);
            for &i in index {
                if i >= rows {
                    return Err(TensorError::RowIndex { index: i, rows });
                }
                data.extend_from_slice(x.row_slice(i));
            }
            Tensor::new(vec![index.len(), cols], data)?
        };
        let rg = self.rg();
        let op = Op::GatherRows {
            input: self.id,
            index: index.to_vec(),
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Sums row `i` of the input into row `index[i]` of an `out_rows`-row output.
    pub fn scatter_add_rows(self, index: &[usize], out_rows: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            let (rows, cols) = x.dims2()?;
            if rows != index.len() {
                return Err(TensorError::shape("scatter_add_rows", x.shape(), &[index.len()]));
            }
            let mut out = vec![0.0; out_rows * cols];
            for (i, &dst) in index.iter().enumerate() {
                if dst >= out_rows {
                    return Err(TensorError::RowIndex {
                        index: dst,
                        rows: out_rows,
                    });
                }
                axpy(1.0, x.row_slice(i), &mut out[dst * cols..(dst + 1) * cols]);
            }
            Tensor::new(vec![out_rows, cols], out)?
        };
        let rg = self.rg();
        let op = Op::ScatterAddRows {
            input: self.id,
            index: index.to_vec(),
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Mean binary cross-entropy of sigmoid(`self`) against `targets`, using
    /// the overflow-free logit form `max(x,0) − x·t + ln(1 + e^{−|x|})`.
    pub fn bce_with_logits(self, targets: &[f64]) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            if x.len() != targets.len() || x.is_empty() {
                return Err(TensorError::shape("bce_with_logits", x.shape(), &[targets.len()]));
            }
            let total: f64 = x
                .data()
                .iter()
                .zip(targets)
                .map(|(&xi, &t)| xi.max(0.0) - xi * t + (-xi.abs()).exp().ln_1p())
                .sum();
            Tensor::scalar(total / targets.len() as f64)
        };
        let rg = self.rg();
        let op = Op::BceWithLogits {
            logits: self.id,
            targets: targets.to_vec(),
        };
        Ok(self.tape.push(value, op, rg))
    }
}
