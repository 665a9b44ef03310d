//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are stored
//! in creation order, which is a topological order, so the reverse pass is a
//! single backwards sweep. Nodes that do not depend on any parameter are
//! marked constant and skipped during the sweep.

use super::linalg;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddConst(Var),
    Exp(Var),
    Log(Var),
    Sin(Var),
    Cos(Var),
    Tanh(Var),
    Square(Var),
    Powf(Var, f64),
    Softplus(Var),
    Sum(Var),
    SumAxis(Var, Axis),
    Broadcast(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, Axis),
    Slice { src: Var, axis: Axis, start: usize },
    Softmax(Var, Axis),
    Cholesky(Var),
    TriSolve { l: Var, b: Var, transpose: bool },
    LogDetChol(Var),
    AddDiag(Var, Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Computation graph. Create one per optimisation step; dropping it clears
/// the tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of the given shape if `v` did not influence
    /// the root.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn as_2d(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], shape[1]),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-differentiable leaf (data, masks, fixed constants).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.value(a).zip_map(self.value(b), f);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(op, value, rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(op, value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddConst(a), |x| x + c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sin(a), f64::sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Op::Cos(a), f64::cos)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        self.unary(a, Op::Powf(a, p), |x| x.powf(p))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(Op::Sum(a), value, rg)
    }

    /// Sums along `axis`, keeping it as an extent-1 dimension.
    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let value = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, v) in out.iter_mut().zip(t.row_slice(i)) {
                        *o += v;
                    }
                }
                Tensor::matrix(1, c, out)?
            }
            Axis::Cols => {
                let out = (0..r).map(|i| t.row_slice(i).iter().sum()).collect();
                Tensor::matrix(r, 1, out)?
            }
        };
        let rg = self.rg(a);
        Ok(self.push(Op::SumAxis(a, axis), value, rg))
    }

    /// Broadcasts a scalar, row vector or column vector to `shape` (rank ≤ 2).
    pub fn broadcast(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let (r0, c0) = as_2d(src.shape());
        let (r, c) = as_2d(shape);
        if shape.len() > 2 || (r0 != 1 && r0 != r) || (c0 != 1 && c0 != c) {
            return Err(Error::shape(
                "broadcast",
                format!("{:?} -> {shape:?}", src.shape()),
            ));
        }
        let sd = src.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let si = if r0 == 1 { 0 } else { i };
            for j in 0..c {
                let sj = if c0 == 1 { 0 } else { j };
                out.push(sd[si * c0 + sj]);
            }
        }
        let value = Tensor::new(shape.to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Broadcast(a), value, rg))
    }

    /// `a * s` with `s` a single-element tensor.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let sb = self.broadcast(s, &shape)?;
        self.mul(a, sb)
    }

    /// `a + s` with `s` a single-element tensor.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let sb = self.broadcast(s, &shape)?;
        self.add(a, sb)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = linalg::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(Op::Transpose(a), value, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Reshape(a), value, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let (r0, c0) = (self.value(*first).rows(), self.value(*first).cols());
        let value = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != c0 {
                        return Err(Error::shape("concat", "column counts differ"));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::matrix(rows, c0, data)?
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != r0 {
                        return Err(Error::shape("concat", "row counts differ"));
                    }
                    cols += t.cols();
                }
                let mut data = Vec::with_capacity(r0 * cols);
                for i in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(i));
                    }
                }
                Tensor::matrix(r0, cols, data)?
            }
        };
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Op::Concat(parts.to_vec(), axis), value, rg))
    }

    /// Contiguous range `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let value = match axis {
            Axis::Rows => {
                if start + len > r {
                    return Err(Error::shape("slice", format!("rows {start}+{len} > {r}")));
                }
                Tensor::matrix(len, c, t.data()[start * c..(start + len) * c].to_vec())?
            }
            Axis::Cols => {
                if start + len > c {
                    return Err(Error::shape("slice", format!("cols {start}+{len} > {c}")));
                }
                let mut data = Vec::with_capacity(r * len);
                for i in 0..r {
                    data.extend_from_slice(&t.row_slice(i)[start..start + len]);
                }
                Tensor::matrix(r, len, data)?
            }
        };
        let rg = self.rg(a);
        Ok(self.push(Op::Slice { src: a, axis, start }, value, rg))
    }

    /// Single entry `(i, j)` as a `1 x 1` tensor.
    pub fn entry(&mut self, a: Var, i: usize, j: usize) -> Result<Var> {
        let row = self.slice(a, Axis::Rows, i, 1)?;
        self.slice(row, Axis::Cols, j, 1)
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(Error::shape("softmax", format!("{:?} is not rank 2", t.shape())));
        }
        let value = softmax_values(t, axis);
        let rg = self.rg(a);
        Ok(self.push(Op::Softmax(a, axis), value, rg))
    }

    /// Lower Cholesky factor. Fails with [`Error::NotPositiveDefinite`] when
    /// the caller should retry with more jitter; nothing is recorded then.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        linalg::check_symmetric(t)?;
        let value = linalg::cholesky(t)?;
        let rg = self.rg(a);
        Ok(self.push(Op::Cholesky(a), value, rg))
    }

    /// `L⁻¹ B`, or `L⁻ᵀ B` when `transpose` is set, for lower-triangular `L`.
    pub fn triangular_solve(&mut self, l: Var, b: Var, transpose: bool) -> Result<Var> {
        let (lt, bt) = (self.value(l), self.value(b));
        if lt.rows() != lt.cols() {
            return Err(Error::shape("triangular_solve", format!("{:?}", lt.shape())));
        }
        let value = if transpose {
            linalg::solve_lower_transpose(lt, bt)?
        } else {
            linalg::solve_lower(lt, bt)?
        };
        let rg = self.rg(l) || self.rg(b);
        Ok(self.push(Op::TriSolve { l, b, transpose }, value, rg))
    }

    /// `log det(L Lᵀ) = 2 Σ log L_ii`.
    pub fn logdet_from_cholesky(&mut self, l: Var) -> Result<Var> {
        let t = self.value(l);
        if t.rows() != t.cols() {
            return Err(Error::shape("logdet", format!("{:?}", t.shape())));
        }
        let n = t.rows();
        let v: f64 = (0..n).map(|i| t.at(i, i).ln()).sum::<f64>() * 2.0;
        let rg = self.rg(l);
        Ok(self.push(Op::LogDetChol(l), Tensor::scalar(v), rg))
    }

    /// `A + s I` for scalar `s`.
    pub fn add_diag(&mut self, a: Var, s: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rows() != t.cols() || !self.value(s).is_scalar() {
            return Err(Error::shape("add_diag", format!("{:?}", t.shape())));
        }
        let sv = self.value(s).item();
        let mut value = t.clone();
        let n = value.rows();
        for i in 0..n {
            let d = value.at(i, i);
            value.set(i, i, d + sv);
        }
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(Op::AddDiag(a, s), value, rg))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accum(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accum(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                if self.rg(*a) {
                    self.accum(grads, *a, g.zip_map(bv, |x, y| x / y));
                }
                if self.rg(*b) {
                    let t = g.zip_map(y, |x, q| x * q).zip_map(bv, |x, d| -x / d);
                    self.accum(grads, *b, t);
                }
            }
            Op::Neg(a) => self.accum(grads, *a, g.map(|x| -x)),
            Op::Scale(a, c) => self.accum(grads, *a, g.map(|x| c * x)),
            Op::AddConst(a) => self.accum(grads, *a, g.clone()),
            Op::Exp(a) => self.accum(grads, *a, g.zip_map(y, |x, e| x * e)),
            Op::Log(a) => self.accum(grads, *a, g.zip_map(self.value(*a), |x, v| x / v)),
            Op::Sin(a) => self.accum(grads, *a, g.zip_map(self.value(*a), |x, v| x * v.cos())),
            Op::Cos(a) => self.accum(grads, *a, g.zip_map(self.value(*a), |x, v| -x * v.sin())),
            Op::Tanh(a) => self.accum(grads, *a, g.zip_map(y, |x, t| x * (1.0 - t * t))),
            Op::Square(a) => {
                self.accum(grads, *a, g.zip_map(self.value(*a), |x, v| 2.0 * x * v))
            }
            Op::Powf(a, p) => self.accum(
                grads,
                *a,
                g.zip_map(self.value(*a), |x, v| x * p * v.powf(p - 1.0)),
            ),
            Op::Softplus(a) => {
                self.accum(grads, *a, g.zip_map(self.value(*a), |x, v| x * sigmoid(v)))
            }
            Op::Sum(a) => {
                let s = g.item();
                self.accum(grads, *a, Tensor::full(self.shape(*a), s));
            }
            Op::SumAxis(a, axis) => {
                let src = self.value(*a);
                let (r, c) = (src.rows(), src.cols());
                let mut out = Vec::with_capacity(r * c);
                for i in 0..r {
                    for j in 0..c {
                        out.push(match axis {
                            Axis::Rows => g.data()[j],
                            Axis::Cols => g.data()[i],
                        });
                    }
                }
                self.accum(grads, *a, Tensor::new(src.shape().to_vec(), out)?);
            }
            Op::Broadcast(a) => {
                let src = self.value(*a);
                let (r0, c0) = as_2d(src.shape());
                let (r, c) = as_2d(g.shape());
                let mut out = vec![0.0; r0 * c0];
                let gd = g.data();
                for i in 0..r {
                    let si = if r0 == 1 { 0 } else { i };
                    for j in 0..c {
                        let sj = if c0 == 1 { 0 } else { j };
                        out[si * c0 + sj] += gd[i * c + j];
                    }
                }
                self.accum(grads, *a, Tensor::new(src.shape().to_vec(), out)?);
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let bt = self.value(*b).transpose();
                    self.accum(grads, *a, linalg::matmul(g, &bt)?);
                }
                if self.rg(*b) {
                    let at = self.value(*a).transpose();
                    self.accum(grads, *b, linalg::matmul(&at, g)?);
                }
            }
            Op::Transpose(a) => self.accum(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accum(grads, *a, g.clone().reshaped(&shape)?);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (self.value(p).rows(), self.value(p).cols());
                    let piece = match axis {
                        Axis::Rows => {
                            let c = g.cols();
                            let t = Tensor::matrix(pr, c, g.data()[offset * c..(offset + pr) * c].to_vec())?;
                            offset += pr;
                            t
                        }
                        Axis::Cols => {
                            let mut data = Vec::with_capacity(pr * pc);
                            for i in 0..pr {
                                data.extend_from_slice(&g.row_slice(i)[offset..offset + pc]);
                            }
                            offset += pc;
                            Tensor::matrix(pr, pc, data)?
                        }
                    };
                    self.accum(grads, p, piece);
                }
            }
            Op::Slice { src, axis, start } => {
                let s = self.value(*src);
                let mut out = Tensor::zeros(s.shape());
                let c = s.cols();
                match axis {
                    Axis::Rows => {
                        let n = g.len();
                        out.data_mut()[start * c..start * c + n].copy_from_slice(g.data());
                    }
                    Axis::Cols => {
                        let len = g.cols();
                        for i in 0..s.rows() {
                            out.data_mut()[i * c + start..i * c + start + len]
                                .copy_from_slice(g.row_slice(i));
                        }
                    }
                }
                self.accum(grads, *src, out);
            }
            Op::Softmax(a, axis) => {
                let gy = g.zip_map(y, |x, p| x * p);
                let (r, c) = (y.rows(), y.cols());
                let mut out = vec![0.0; r * c];
                match axis {
                    Axis::Cols => {
                        for i in 0..r {
                            let s: f64 = gy.row_slice(i).iter().sum();
                            for j in 0..c {
                                out[i * c + j] = y.at(i, j) * (g.at(i, j) - s);
                            }
                        }
                    }
                    Axis::Rows => {
                        for j in 0..c {
                            let s: f64 = (0..r).map(|i| gy.at(i, j)).sum();
                            for i in 0..r {
                                out[i * c + j] = y.at(i, j) * (g.at(i, j) - s);
                            }
                        }
                    }
                }
                self.accum(grads, *a, Tensor::matrix(r, c, out)?);
            }
            Op::Cholesky(a) => {
                let abar = cholesky_adjoint(y, g)?;
                self.accum(grads, *a, abar);
            }
            Op::TriSolve { l, b, transpose } => {
                let lv = self.value(*l);
                // B̄ = L⁻ᵀ X̄ (or L⁻¹ X̄ for the transposed solve).
                let bbar = if *transpose {
                    linalg::solve_lower(lv, g)?
                } else {
                    linalg::solve_lower_transpose(lv, g)?
                };
                if self.rg(*l) {
                    // L̄ = -B̄ Xᵀ, or -X B̄ᵀ for the transposed solve; lower part only.
                    let mut lbar = if *transpose {
                        linalg::matmul(y, &bbar.transpose())?
                    } else {
                        linalg::matmul(&bbar, &y.transpose())?
                    };
                    for v in lbar.data_mut() {
                        *v = -*v;
                    }
                    linalg::tril_in_place(&mut lbar);
                    self.accum(grads, *l, lbar);
                }
                self.accum(grads, *b, bbar);
            }
            Op::LogDetChol(l) => {
                let lv = self.value(*l);
                let n = lv.rows();
                let s = g.item();
                let mut out = Tensor::zeros(lv.shape());
                for i in 0..n {
                    out.set(i, i, 2.0 * s / lv.at(i, i));
                }
                self.accum(grads, *l, out);
            }
            Op::AddDiag(a, s) => {
                self.accum(grads, *a, g.clone());
                if self.rg(*s) {
                    let n = g.rows();
                    let tr: f64 = (0..n).map(|i| g.at(i, i)).sum();
                    let shape = self.shape(*s).to_vec();
                    self.accum(grads, *s, Tensor::full(&shape, tr));
                }
            }
        }
        Ok(())
    }
}

/// Adjoint of `A ↦ chol(sym(A))`:
/// `Ā = sym(L⁻ᵀ Φ(Lᵀ L̄) L⁻¹)`, with `Φ` taking the lower triangle and
/// halving the diagonal.
fn cholesky_adjoint(l: &Tensor, lbar: &Tensor) -> Result<Tensor> {
    let n = l.rows();
    let mut lbar = lbar.clone();
    linalg::tril_in_place(&mut lbar);
    let mut p = linalg::matmul(&l.transpose(), &lbar)?;
    {
        let d = p.data_mut();
        for i in 0..n {
            for j in (i + 1)..n {
                d[i * n + j] = 0.0;
            }
            d[i * n + i] *= 0.5;
        }
    }
    let x = linalg::solve_lower_transpose(l, &p)?; // L⁻ᵀ P
    let s = linalg::solve_lower_transpose(l, &x.transpose())?.transpose(); // (L⁻ᵀ Xᵀ)ᵀ = X L⁻¹
    let mut out = s.clone();
    let od = out.data_mut();
    for i in 0..n {
        for j in 0..n {
            od[i * n + j] = 0.5 * (s.at(i, j) + s.at(j, i));
        }
    }
    Ok(out)
}

pub fn softmax_values(t: &Tensor, axis: Axis) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = t.data().to_vec();
    match axis {
        Axis::Cols => {
            for i in 0..r {
                let row = &mut out[i * c..(i + 1) * c];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - m).exp();
                    s += *v;
                }
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        Axis::Rows => {
            for j in 0..c {
                let m = (0..r).map(|i| out[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for i in 0..r {
                    let e = (out[i * c + j] - m).exp();
                    out[i * c + j] = e;
                    s += e;
                }
                for i in 0..r {
                    out[i * c + j] /= s;
                }
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out).expect("shape preserved")
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
