//! Wengert-list reverse-mode differentiation.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! return lightweight [`Var`] handles; [`Tape::backward`] replays the list in
//! reverse. Tapes are built fresh for each training step and dropped after.

use std::fmt;

use super::params::{Bound, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    AddRow,
    Sum,
    Mean,
    SumRows,
    Exp,
    Log,
    Tanh,
    Relu,
    Elu,
    Sigmoid,
    Softplus,
    Square,
    Negate,
    Sqrt,
    Scale,
    AddScalar,
    Clamp,
    Concat,
    Slice,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpKind::Leaf => "leaf",
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::AddRow => "broadcast-add-row",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumRows => "sum-rows",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Elu => "elu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softplus => "softplus",
            OpKind::Square => "square",
            OpKind::Negate => "negate",
            OpKind::Sqrt => "sqrt",
            OpKind::Scale => "scale",
            OpKind::AddScalar => "add-scalar",
            OpKind::Clamp => "clamp",
            OpKind::Concat => "concat",
            OpKind::Slice => "slice",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Unary(OpKind, Var),
    Binary(OpKind, Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    Slice(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to the trainable leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients for every parameter of a bound set, in parameter order.
    pub fn for_bound(&self, bound: &Bound) -> Vec<Tensor> {
        bound
            .vars()
            .iter()
            .map(|&v| {
                self.get(v)
                    .cloned()
                    .expect("bound parameters are trainable leaves of this tape")
            })
            .collect()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// `c (m×n) = a (m×k) · b (k×n) + beta · c`, with explicit strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: the asserts above guarantee every strided access stays inside
    // the slices: a is m×k, b is k×n and c is m×n with the given layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn is_matrix(t: &Tensor) -> bool {
    t.shape().len() == 2
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// A tape that evaluates forward values only; `backward` is an error.
    pub fn without_recording() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let (op, requires_grad) = if self.recording {
            (op, requires_grad)
        } else {
            (Op::Leaf, false)
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation (data, noise, frozen statistics).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records every tensor of `params` as a trainable leaf.
    pub fn bind(&mut self, params: &ParamSet) -> Bound {
        Bound::new(params.tensors().iter().map(|t| self.leaf(t.clone())).collect())
    }

    /// Records every tensor of `params` as a constant.
    pub fn bind_frozen(&mut self, params: &ParamSet) -> Bound {
        Bound::new(
            params
                .tensors()
                .iter()
                .map(|t| self.constant(t.clone()))
                .collect(),
        )
    }

    fn mismatch(&self, op: OpKind, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !is_matrix(ta) || !is_matrix(tb) || ta.shape()[1] != tb.shape()[0] {
            return Err(self.mismatch(OpKind::MatMul, a, b));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            ta.data(),
            (k as isize, 1),
            tb.data(),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let value = Tensor::matrix(m, n, out)?;
        let rg = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(value, Op::Binary(OpKind::MatMul, a, b), rg))
    }

    fn elementwise(
        &mut self,
        kind: OpKind,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(self.mismatch(kind, a, b));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(OpKind::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(OpKind::Sub, a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(OpKind::Mul, a, b, |x, y| x * y)
    }

    /// Adds a `[1, m]` row to every row of an `[n, m]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let row_ok = tr.rows() == 1 && tr.shape().len() <= 2;
        if !is_matrix(ta) || !row_ok || tr.cols() != ta.cols() {
            return Err(self.mismatch(OpKind::AddRow, a, row));
        }
        let c = ta.cols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + tr.data()[i % c])
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.grad_of(a) || self.grad_of(row);
        Ok(self.push(value, Op::Binary(OpKind::AddRow, a, row), rg))
    }

    fn unary(&mut self, kind: OpKind, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.grad_of(a);
        self.push(value, Op::Unary(kind, a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.grad_of(a);
        self.push(Tensor::scalar(s), Op::Unary(OpKind::Sum, a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.grad_of(a);
        self.push(Tensor::scalar(s), Op::Unary(OpKind::Mean, a), rg)
    }

    /// Sums each row of an `[n, m]` matrix into an `[n, 1]` column.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if !is_matrix(t) {
            return Err(Error::ShapeMismatch {
                op: OpKind::SumRows,
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        let data = (0..t.rows()).map(|r| t.row_slice(r).iter().sum()).collect();
        let value = Tensor::matrix(t.rows(), 1, data)?;
        let rg = self.grad_of(a);
        Ok(self.push(value, Op::Unary(OpKind::SumRows, a), rg))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(OpKind::Exp, a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(OpKind::Log, a, f64::ln)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(OpKind::Tanh, a, f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(OpKind::Relu, a, |x| x.max(0.0))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        self.unary(OpKind::Elu, a, elu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(OpKind::Sigmoid, a, sigmoid)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(OpKind::Softplus, a, softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(OpKind::Square, a, |x| x * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(OpKind::Negate, a, |x| -x)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(OpKind::Sqrt, a, f64::sqrt)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.grad_of(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        let rg = self.grad_of(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.grad_of(a);
        self.push(value, Op::Clamp(a, lo, hi), rg)
    }

    /// Column-wise concatenation of `[n, p]` and `[n, q]` into `[n, p + q]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !is_matrix(ta) || !is_matrix(tb) || ta.rows() != tb.rows() {
            return Err(self.mismatch(OpKind::Concat, a, b));
        }
        let (n, p, q) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            data.extend_from_slice(ta.row_slice(r));
            data.extend_from_slice(tb.row_slice(r));
        }
        let value = Tensor::matrix(n, p + q, data)?;
        let rg = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(value, Op::Binary(OpKind::Concat, a, b), rg))
    }

    /// Columns `start..end` of an `[n, m]` matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if !is_matrix(t) || start >= end || end > t.cols() {
            return Err(Error::ShapeMismatch {
                op: OpKind::Slice,
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let n = t.rows();
        let mut data = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let value = Tensor::matrix(n, end - start, data)?;
        let rg = self.grad_of(a);
        Ok(self.push(value, Op::Slice(a, start, end), rg))
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every trainable leaf gets an entry; leaves the loss does not depend on
    /// receive zeros. The tape itself is left intact so several losses built
    /// on one forward pass can be differentiated separately.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if !self.recording {
            return Err(Error::NotRecording);
        }
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }

        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut out: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            match node.op {
                Op::Leaf => {
                    out[i] = Some(Tensor::new(node.value.shape().to_vec(), g)?);
                }
                Op::Binary(kind, a, b) => self.backward_binary(kind, a, b, i, &g, &mut grads),
                Op::Unary(kind, a) => {
                    if let Some(ga) = self.input_grad(a, &mut grads) {
                        backward_unary(kind, self.value(a), &node.value, &g, ga);
                    }
                }
                Op::Scale(a, c) => {
                    if let Some(ga) = self.input_grad(a, &mut grads) {
                        ga.iter_mut().zip(&g).for_each(|(d, &gv)| *d += c * gv);
                    }
                }
                Op::AddScalar(a) => {
                    if let Some(ga) = self.input_grad(a, &mut grads) {
                        ga.iter_mut().zip(&g).for_each(|(d, &gv)| *d += gv);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let xs = self.value(a).data();
                    if let Some(ga) = self.input_grad(a, &mut grads) {
                        for ((d, &gv), &x) in ga.iter_mut().zip(&g).zip(xs) {
                            if x >= lo && x <= hi {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Slice(a, start, end) => {
                    let cols = self.value(a).cols();
                    let w = end - start;
                    if let Some(ga) = self.input_grad(a, &mut grads) {
                        for (r, grow) in g.chunks(w).enumerate() {
                            let dst = &mut ga[r * cols + start..r * cols + end];
                            dst.iter_mut().zip(grow).for_each(|(d, &gv)| *d += gv);
                        }
                    }
                }
            }
        }

        // Trainable leaves the loss does not reach get explicit zeros.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && matches!(node.op, Op::Leaf) && out[i].is_none() {
                out[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { by_node: out })
    }

    /// Accumulation buffer for input `a`, or `None` if `a` is not differentiated.
    fn input_grad<'g>(
        &self,
        a: Var,
        grads: &'g mut [Option<Vec<f64>>],
    ) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[a.0].requires_grad {
            return None;
        }
        let len = self.nodes[a.0].value.numel();
        Some(grads[a.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn backward_binary(
        &self,
        kind: OpKind,
        a: Var,
        b: Var,
        out_id: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        match kind {
            OpKind::MatMul => {
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = dC · Bᵀ
                if let Some(ga) = self.input_grad(a, grads) {
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        (n as isize, 1),
                        tb.data(),
                        (1, n as isize),
                        1.0,
                        ga,
                    );
                }
                // dB = Aᵀ · dC
                if let Some(gb) = self.input_grad(b, grads) {
                    gemm(
                        k,
                        m,
                        n,
                        ta.data(),
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        1.0,
                        gb,
                    );
                }
            }
            OpKind::Add | OpKind::Sub => {
                if let Some(ga) = self.input_grad(a, grads) {
                    ga.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                }
                let sign = if kind == OpKind::Add { 1.0 } else { -1.0 };
                if let Some(gb) = self.input_grad(b, grads) {
                    gb.iter_mut().zip(g).for_each(|(d, &gv)| *d += sign * gv);
                }
            }
            OpKind::Mul => {
                if let Some(ga) = self.input_grad(a, grads) {
                    for ((d, &gv), &y) in ga.iter_mut().zip(g).zip(tb.data()) {
                        *d += gv * y;
                    }
                }
                if let Some(gb) = self.input_grad(b, grads) {
                    for ((d, &gv), &x) in gb.iter_mut().zip(g).zip(ta.data()) {
                        *d += gv * x;
                    }
                }
            }
            OpKind::AddRow => {
                let c = ta.cols();
                if let Some(ga) = self.input_grad(a, grads) {
                    ga.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                }
                if let Some(gr) = self.input_grad(b, grads) {
                    for grow in g.chunks(c) {
                        gr.iter_mut().zip(grow).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            OpKind::Concat => {
                let (p, q) = (ta.cols(), tb.cols());
                if let Some(ga) = self.input_grad(a, grads) {
                    for (r, grow) in g.chunks(p + q).enumerate() {
                        let dst = &mut ga[r * p..(r + 1) * p];
                        dst.iter_mut().zip(&grow[..p]).for_each(|(d, &gv)| *d += gv);
                    }
                }
                if let Some(gb) = self.input_grad(b, grads) {
                    for (r, grow) in g.chunks(p + q).enumerate() {
                        let dst = &mut gb[r * q..(r + 1) * q];
                        dst.iter_mut().zip(&grow[p..]).for_each(|(d, &gv)| *d += gv);
                    }
                }
            }
            other => unreachable!("{other} is not a binary op (node {out_id})"),
        }
    }
}

fn backward_unary(kind: OpKind, input: &Tensor, output: &Tensor, g: &[f64], ga: &mut [f64]) {
    let x = input.data();
    let y = output.data();
    match kind {
        OpKind::Sum => {
            let g0 = g[0];
            ga.iter_mut().for_each(|d| *d += g0);
        }
        OpKind::Mean => {
            let g0 = g[0] / ga.len() as f64;
            ga.iter_mut().for_each(|d| *d += g0);
        }
        OpKind::SumRows => {
            let c = input.cols();
            for (r, &gv) in g.iter().enumerate() {
                ga[r * c..(r + 1) * c].iter_mut().for_each(|d| *d += gv);
            }
        }
        _ => {
            let deriv: fn(f64, f64) -> f64 = match kind {
                OpKind::Exp => |_, y| y,
                OpKind::Log => |x, _| 1.0 / x,
                OpKind::Tanh => |_, y| 1.0 - y * y,
                OpKind::Relu => |x, _| if x > 0.0 { 1.0 } else { 0.0 },
                OpKind::Elu => |x, y| if x > 0.0 { 1.0 } else { y + 1.0 },
                OpKind::Sigmoid => |_, y| y * (1.0 - y),
                OpKind::Softplus => |x, _| sigmoid(x),
                OpKind::Square => |x, _| 2.0 * x,
                OpKind::Negate => |_, _| -1.0,
                OpKind::Sqrt => |_, y| 0.5 / y,
                other => unreachable!("{other} is not an elementwise unary op"),
            };
            for i in 0..ga.len() {
                ga[i] += g[i] * deriv(x[i], y[i]);
            }
        }
    }
}
