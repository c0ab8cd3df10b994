//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends a node holding its forward value and the handles of its
//! operands. Nodes are only ever appended, so the insertion order is a topological order
//! and `backward` walks it in reverse, visiting each node once. Sparse operands are
//! constants: gradients flow only through dense nodes.

use std::sync::Arc;

use crate::error::{LedaError, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(Arc<SparseMatrix<T>>, Var),
    Transpose(Var),
    Relu(Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Offset(Var, T),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, T, T),
    ReduceSum(Var),
    ReduceMean(Var),
    FrobeniusSq(Var),
    RowSum(Var),
    ColSum(Var),
    BroadcastRows(Var),
    LogSoftmaxRows(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: DenseMatrix<T>,
    op: Op<T>,
    label: Option<String>,
    trainable: bool,
    requires_grad: bool,
}

/// Computation graph for one forward/backward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Option<Vec<Option<DenseMatrix<T>>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-differentiated input.
    pub fn constant(&mut self, value: DenseMatrix<T>) -> Var {
        self.push_leaf(value, None, false)
    }

    pub fn constant_named(&mut self, label: impl Into<String>, value: DenseMatrix<T>) -> Var {
        self.push_leaf(value, Some(label.into()), false)
    }

    /// Trainable leaf; its gradient is available after [`Tape::backward`].
    pub fn parameter(&mut self, name: impl Into<String>, value: DenseMatrix<T>) -> Var {
        self.push_leaf(value, Some(name.into()), true)
    }

    fn push_leaf(&mut self, value: DenseMatrix<T>, label: Option<String>, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            label,
            trainable,
            requires_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: DenseMatrix<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            label: None,
            trainable: false,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &DenseMatrix<T> {
        &self.nodes[var.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> Result<T> {
        self.value(var).as_scalar().ok_or_else(|| {
            LedaError::shape("scalar", format!("{} is not 1x1", self.describe(var)))
        })
    }

    pub fn is_trainable(&self, var: Var) -> bool {
        self.nodes[var.0].trainable
    }

    fn describe(&self, var: Var) -> String {
        let node = &self.nodes[var.0];
        let (r, c) = node.value.shape();
        match &node.label {
            Some(label) => format!("'{label}' ({r}x{c})"),
            None => format!("node #{} ({r}x{c})", var.0),
        }
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> LedaError {
        LedaError::shape(op, format!("{} vs {}", self.describe(a), self.describe(b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch(op, a, b));
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).cols() != self.value(b).rows() {
            return Err(self.mismatch("matmul", a, b));
        }
        let value = self.value(a).matmul_unchecked(self.value(b));
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `S · a` with a constant sparse left factor.
    pub fn sparse_matmul(&mut self, s: &Arc<SparseMatrix<T>>, a: Var) -> Result<Var> {
        let value = s.matmul_dense(self.value(a)).map_err(|_| {
            LedaError::shape(
                "sparse_matmul",
                format!(
                    "sparse {}x{} vs {}",
                    s.rows(),
                    s.cols(),
                    self.describe(a)
                ),
            )
        })?;
        Ok(self.push(value, Op::SparseMatMul(Arc::clone(s), a), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |v| v.max(T::zero()))
    }

    /// Adds a `1 × c` bias row to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (b_rows, b_cols) = self.value(bias).shape();
        if b_rows != 1 || b_cols != self.value(a).cols() {
            return Err(self.mismatch("add_row_bias", a, bias));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).values().to_vec();
        for r in 0..value.rows() {
            for (v, &bb) in value.row_mut(r).iter_mut().zip(&b) {
                *v = *v + bb;
            }
        }
        Ok(self.push(value, Op::AddRowBias(a, bias), &[a, bias]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.value(a).zip_map_unchecked(self.value(b), f);
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        self.unary(a, Op::Scale(a, factor), |v| v * factor)
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, shift: T) -> Var {
        self.unary(a, Op::Offset(a, shift), |v| v + shift)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |v| v.exp())
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), |v| v.ln())
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |v| v.sqrt())
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |v| v * v)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    /// Clamps entries into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |v| v.max(lo).min(hi))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).sum());
        self.push(value, Op::ReduceSum(a), &[a])
    }

    pub fn reduce_mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let len = T::of(m.values().len().max(1) as f64);
        let value = DenseMatrix::scalar(m.sum() / len);
        self.push(value, Op::ReduceMean(a), &[a])
    }

    pub fn frobenius_sq(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).frobenius_sq());
        self.push(value, Op::FrobeniusSq(a), &[a])
    }

    /// Sums each row: `n × c` to `n × 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let values = (0..m.rows()).map(|r| m.row(r).iter().copied().sum()).collect();
        let value = DenseMatrix::from_raw(m.rows(), 1, values);
        self.push(value, Op::RowSum(a), &[a])
    }

    /// Sums each column: `n × c` to `1 × c`.
    pub fn col_sum(&mut self, a: Var) -> Var {
        let value = col_sum(self.value(a));
        self.push(value, Op::ColSum(a), &[a])
    }

    /// Repeats a `1 × c` row `n` times.
    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != 1 {
            return Err(LedaError::shape(
                "broadcast_rows",
                format!("{} is not a single row", self.describe(a)),
            ));
        }
        let values = m.values().repeat(n);
        let value = DenseMatrix::from_raw(n, m.cols(), values);
        Ok(self.push(value, Op::BroadcastRows(a), &[a]))
    }

    /// Row-wise `x - logsumexp(x)`.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut value = m.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            for v in row.iter_mut() {
                *v = *v - lse;
            }
        }
        self.push(value, Op::LogSoftmaxRows(a), &[a])
    }

    /// Reverse pass from a `1 × 1` loss. Fails if gradients are already populated.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(LedaError::BackwardTwice);
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(LedaError::shape(
                "backward",
                format!("loss {} must be 1x1", self.describe(loss)),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Clears gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads = None;
    }

    /// Gradient of the last backward loss with respect to `var`; zeros when unreachable.
    pub fn grad(&self, var: Var) -> DenseMatrix<T> {
        let (r, c) = self.value(var).shape();
        self.grads
            .as_ref()
            .and_then(|g| g[var.0].clone())
            .unwrap_or_else(|| DenseMatrix::zeros(r, c))
    }

    pub fn has_grads(&self) -> bool {
        self.grads.is_some()
    }

    fn propagate(&self, i: usize, g: &DenseMatrix<T>, grads: &mut [Option<DenseMatrix<T>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let mut send = |v: Var, contribution: DenseMatrix<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_unchecked(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let g00 = || g.values()[0];

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    send(*a, g.matmul_t_unchecked(val(*b)));
                }
                if needs(*b) {
                    send(*b, val(*a).t_matmul_unchecked(g));
                }
            }
            Op::SparseMatMul(s, a) => {
                send(*a, s.t_matmul_dense(g).expect("shape checked in forward"));
            }
            Op::Transpose(a) => send(*a, g.transpose()),
            Op::Relu(a) => send(
                *a,
                g.zip_map_unchecked(val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() }),
            ),
            Op::AddRowBias(a, bias) => {
                send(*a, g.clone());
                if needs(*bias) {
                    send(*bias, col_sum(g));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    send(*a, g.zip_map_unchecked(val(*b), |x, y| x * y));
                }
                if needs(*b) {
                    send(*b, g.zip_map_unchecked(val(*a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                if needs(*a) {
                    send(*a, g.zip_map_unchecked(val(*b), |x, y| x / y));
                }
                if needs(*b) {
                    // d(a/b)/db = -out / b
                    let tmp = g.zip_map_unchecked(out, |x, y| x * y);
                    send(*b, tmp.zip_map_unchecked(val(*b), |x, y| -x / y));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                send(*a, g.map(|v| v * c));
            }
            Op::Offset(a, _) => send(*a, g.clone()),
            Op::Exp(a) => send(*a, g.zip_map_unchecked(out, |x, y| x * y)),
            Op::Log(a) => send(*a, g.zip_map_unchecked(val(*a), |x, y| x / y)),
            Op::Sqrt(a) => send(*a, g.zip_map_unchecked(out, |x, y| x / (y + y))),
            Op::Square(a) => send(*a, g.zip_map_unchecked(val(*a), |x, y| T::of(2.0) * x * y)),
            Op::Softplus(a) => send(*a, g.zip_map_unchecked(val(*a), |x, y| x * sigmoid(y))),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                send(
                    *a,
                    g.zip_map_unchecked(val(*a), |x, y| {
                        if y >= lo && y <= hi {
                            x
                        } else {
                            T::zero()
                        }
                    }),
                )
            }
            Op::ReduceSum(a) => {
                let (r, c) = val(*a).shape();
                send(*a, DenseMatrix::filled(r, c, g00()));
            }
            Op::ReduceMean(a) => {
                let (r, c) = val(*a).shape();
                let len = T::of((r * c).max(1) as f64);
                send(*a, DenseMatrix::filled(r, c, g00() / len));
            }
            Op::FrobeniusSq(a) => {
                let factor = T::of(2.0) * g00();
                send(*a, val(*a).map(|v| v * factor));
            }
            Op::RowSum(a) => {
                let (r, c) = val(*a).shape();
                let mut out = DenseMatrix::zeros(r, c);
                for row in 0..r {
                    let gv = g.values()[row];
                    out.row_mut(row).iter_mut().for_each(|v| *v = gv);
                }
                send(*a, out);
            }
            Op::ColSum(a) => {
                let r = val(*a).rows();
                send(*a, broadcast(g, r));
            }
            Op::BroadcastRows(a) => send(*a, col_sum(g)),
            Op::LogSoftmaxRows(a) => {
                let mut out_grad = g.clone();
                for r in 0..out_grad.rows() {
                    let total: T = g.row(r).iter().copied().sum();
                    for (o, &lp) in out_grad.row_mut(r).iter_mut().zip(out.row(r)) {
                        *o = *o - lp.exp() * total;
                    }
                }
                send(*a, out_grad);
            }
        }
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn col_sum<T: Scalar>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = vec![T::zero(); m.cols()];
    for r in 0..m.rows() {
        for (o, &v) in out.iter_mut().zip(m.row(r)) {
            *o = *o + v;
        }
    }
    DenseMatrix::from_raw(1, m.cols(), out)
}

fn broadcast<T: Scalar>(row: &DenseMatrix<T>, n: usize) -> DenseMatrix<T> {
    DenseMatrix::from_raw(n, row.cols(), row.values().repeat(n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn relu_forward_and_backward() {
        let mut tape = Tape::new();
        let x = tape.parameter("x", m(&[vec![-1.0, 2.0]]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).values(), &[0.0, 2.0]);
        let loss = tape.reduce_sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).values(), &[0.0, 1.0]);
    }

    #[test]
    fn frobenius_of_three_four() {
        let mut tape = Tape::new();
        let x = tape.parameter("x", m(&[vec![3.0, 4.0]]));
        let f = tape.frobenius_sq(x);
        assert_eq!(tape.scalar(f).unwrap(), 25.0);
    }

    #[test]
    fn sum_gradient_is_ones_and_frobenius_gradient_is_twice_w() {
        let w0 = m(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut tape = Tape::new();
        let w = tape.parameter("W", w0.clone());
        let s = tape.reduce_sum(w);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w), DenseMatrix::filled(2, 2, 1.0));

        let mut tape = Tape::new();
        let w = tape.parameter("W", w0.clone());
        let f = tape.frobenius_sq(w);
        tape.backward(f).unwrap();
        assert_eq!(tape.grad(w), w0.scale(2.0));
    }

    #[test]
    fn unused_parameter_gets_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.parameter("a", m(&[vec![1.0]]));
        let unused = tape.parameter("b", m(&[vec![5.0, 6.0]]));
        let loss = tape.square(used);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(unused), DenseMatrix::zeros(1, 2));
        assert_eq!(tape.grad(used).values(), &[2.0]);
    }

    #[test]
    fn backward_twice_requires_reset() {
        let mut tape = Tape::new();
        let x = tape.parameter("x", m(&[vec![1.0]]));
        let loss = tape.square(x);
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(LedaError::BackwardTwice)));
        tape.reset_grads();
        tape.backward(loss).unwrap();
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.parameter("x", m(&[vec![1.0, 2.0]]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn shape_errors_name_operands() {
        let mut tape = Tape::new();
        let a = tape.parameter("dpu.W1", DenseMatrix::<f64>::zeros(3, 4));
        let b = tape.constant_named("features", DenseMatrix::zeros(5, 2));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("dpu.W1") && err.contains("features"), "{err}");
        assert!(tape.add(a, b).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        let mut tape = Tape::new();
        let x = tape.constant(m(&[vec![-800.0, 0.0, 800.0]]));
        let y = tape.softplus(x);
        let v = tape.value(y).values().to_vec();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(v[2], 800.0);
    }
}
