//! Block-level reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and enough
//! bookkeeping to push an upstream gradient back to its inputs. Nodes are
//! only ever appended, so the node order is already a topological order and
//! the backward pass is a single reverse sweep.
//!
//! Vectors are carried as `1 x n` row matrices throughout the crate.
//!
//! Shape errors inside tape operations are programmer errors and panic. The
//! public alignment functions validate shapes before they touch the tape.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    Transpose(Var),
    AddRowBroadcast(Var, Var),
    MulByScalar(Var, Var),
    Recip(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    Abs(Var),
    Square(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Softplus(Var),
    SumAll(Var),
    SoftmaxCols(Var),
    SoftmaxRows(Var),
    CumsumCols(Var),
    DiffCols(Var),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    SqDistOuter(Var, Var),
    GatherRows(Var, Vec<usize>),
    ShiftRows(Var, isize),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
}

/// Which side of a non-differentiable point an evaluation landed on.
///
/// Two evaluations with different signatures crossed a kink somewhere, so a
/// finite difference between them is meaningless.
pub type KinkSignature = Vec<i8>;

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_non_finite: Option<usize>,
    kinks: KinkSignature,
    min_kink_gap: f64,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`. Nodes the output does not depend on get zeros.
    pub fn wrt(&self, v: Var) -> DenseMatrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                DenseMatrix::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { min_kink_gap: f64::INFINITY, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m.get(0, 0)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Errors with the index of the first node whose value is not finite.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_non_finite {
            Some(node) => Err(Error::NonFinite { node }),
            None => Ok(()),
        }
    }

    pub fn kink_signature(&self) -> &[i8] {
        &self.kinks
    }

    /// Smallest distance of any ReLU/clamp/abs argument to its kink.
    pub fn min_kink_gap(&self) -> f64 {
        self.min_kink_gap
    }

    fn push(&mut self, op: Op, value: DenseMatrix) -> Var {
        let id = self.nodes.len();
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(id);
        }
        self.nodes.push(Node { op, value });
        Var(id)
    }

    fn note_kink(&mut self, side: i8, gap: f64) {
        self.kinks.push(side);
        if gap < self.min_kink_gap {
            self.min_kink_gap = gap;
        }
    }

    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Leaf, value)
    }

    /// A leaf holding a copy of `v`'s value; gradients stop here.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(Op::Scale(a, k), out)
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(Op::Offset(a), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols(), vb.rows(), "matmul inner dimension");
        let out = va.matmul_unchecked(vb);
        self.push(Op::MatMul(a, b), out)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    /// `a (n x m) + b (1 x m)` with `b` added to every row.
    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(vb.shape(), (1, va.cols()), "row broadcast shape");
        let mut out = va.clone();
        let cols = va.cols();
        for (i, x) in out.as_mut_slice().iter_mut().enumerate() {
            *x += vb.get(0, i % cols);
        }
        self.push(Op::AddRowBroadcast(a, b), out)
    }

    /// `a * s` where `s` is a `1 x 1` node.
    pub fn mul_by_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let out = self.value(a).map(|x| x * k);
        self.push(Op::MulByScalar(a, s), out)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), out)
    }

    /// ReLU with subgradient 0 at the origin.
    pub fn relu(&mut self, a: Var) -> Var {
        let input = self.value(a).clone();
        for &x in input.as_slice() {
            self.note_kink(i8::from(x > 0.0), x.abs());
        }
        let out = input.map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), out)
    }

    /// Clamp to `[lo, hi]`; the gradient is 1 strictly inside and 0 elsewhere.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clamp bounds");
        let input = self.value(a).clone();
        for &x in input.as_slice() {
            let side = if x <= lo {
                -1
            } else if x >= hi {
                1
            } else {
                0
            };
            self.note_kink(side, (x - lo).abs().min((x - hi).abs()));
        }
        let out = input.map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), out)
    }

    /// Absolute value with subgradient 0 at the origin.
    pub fn abs(&mut self, a: Var) -> Var {
        let input = self.value(a).clone();
        for &x in input.as_slice() {
            let side = if x > 0.0 {
                1
            } else if x < 0.0 {
                -1
            } else {
                0
            };
            self.note_kink(side, x.abs());
        }
        let out = input.map(f64::abs);
        self.push(Op::Abs(a), out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), out)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        self.push(Op::Softplus(a), out)
    }

    /// Sum of all entries as a `1 x 1` node.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Op::SumAll(a), DenseMatrix::from_raw(1, 1, vec![s]))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Softmax down each column (every column sums to 1).
    pub fn softmax_cols(&mut self, a: Var) -> Var {
        let out = softmax_cols_value(self.value(a));
        self.push(Op::SoftmaxCols(a), out)
    }

    /// Softmax along each row (every row sums to 1).
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_cols_value(&self.value(a).transpose()).transpose();
        self.push(Op::SoftmaxRows(a), out)
    }

    /// Running sum along each row.
    pub fn cumsum_cols(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for row in out.as_mut_slice().chunks_mut(cols.max(1)) {
            for c in 1..row.len() {
                row[c] += row[c - 1];
            }
        }
        self.push(Op::CumsumCols(a), out)
    }

    /// First differences along each row: `n x m -> n x (m-1)`.
    pub fn diff_cols(&mut self, a: Var) -> Var {
        let va = self.value(a);
        assert!(va.cols() >= 1, "diff of empty row");
        let (rows, cols) = va.shape();
        let mut data = Vec::with_capacity(rows * (cols - 1));
        for r in 0..rows {
            let row = va.row(r);
            data.extend(row.windows(2).map(|w| w[1] - w[0]));
        }
        let out = DenseMatrix::from_raw(rows, cols - 1, data);
        self.push(Op::DiffCols(a), out)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let va = self.value(a);
        assert!(start <= end && end <= va.cols(), "slice bounds");
        let rows = va.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&va.row(r)[start..end]);
        }
        let out = DenseMatrix::from_raw(rows, end - start, data);
        self.push(Op::SliceCols(a, start), out)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), vb.rows(), "concat row count");
        let rows = va.rows();
        let mut data = Vec::with_capacity(va.len() + vb.len());
        for r in 0..rows {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let out = DenseMatrix::from_raw(rows, va.cols() + vb.cols(), data);
        self.push(Op::ConcatCols(a, b), out)
    }

    /// Pairwise squared distances `(a_i - b_j)^2` of two row vectors,
    /// laid out with `a` along rows and `b` along columns.
    pub fn sq_dist_outer(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.rows(), 1, "sq_dist_outer lhs must be a row vector");
        assert_eq!(vb.rows(), 1, "sq_dist_outer rhs must be a row vector");
        let (n, m) = (va.cols(), vb.cols());
        let mut data = Vec::with_capacity(n * m);
        for &x in va.as_slice() {
            data.extend(vb.as_slice().iter().map(|&y| (x - y) * (x - y)));
        }
        let out = DenseMatrix::from_raw(n, m, data);
        self.push(Op::SqDistOuter(a, b), out)
    }

    /// Row lookup, as in an embedding table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let vt = self.value(table);
        let cols = vt.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            assert!(id < vt.rows(), "gather index {id} out of range");
            data.extend_from_slice(vt.row(id));
        }
        let out = DenseMatrix::from_raw(ids.len(), cols, data);
        self.push(Op::GatherRows(table, ids.to_vec()), out)
    }

    /// `out[r] = a[r - k]`, zero where `r - k` falls outside the matrix.
    pub fn shift_rows(&mut self, a: Var, k: isize) -> Var {
        let out = shift_rows_value(self.value(a), k);
        self.push(Op::ShiftRows(a, k), out)
    }

    /// Reverse sweep from `output`, seeded with ones (the gradient of the sum
    /// of all output entries).
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.check_finite()?;
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        let (r, c) = self.shape(output);
        grads[output.0] = Some(DenseMatrix::filled(r, c, 1.0));

        for id in (0..=output.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads);
            grads[id] = Some(g);
        }
        for (id, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::NonFinite { node: id });
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        grads.resize(self.nodes.len(), None);
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
            }
            Op::Scale(a, k) => accumulate(grads, *a, g.map(|x| x * k)),
            Op::Offset(a) => accumulate(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_unchecked(&val(*b).transpose()));
                accumulate(grads, *b, val(*a).transpose().matmul_unchecked(g));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::AddRowBroadcast(a, b) => {
                accumulate(grads, *a, g.clone());
                let sums = g.col_sums();
                accumulate(grads, *b, DenseMatrix::from_raw(1, sums.len(), sums));
            }
            Op::MulByScalar(a, s) => {
                let k = val(*s).get(0, 0);
                accumulate(grads, *a, g.map(|x| x * k));
                let ds: f64 = g.as_slice().iter().zip(val(*a).as_slice()).map(|(x, y)| x * y).sum();
                accumulate(grads, *s, DenseMatrix::from_raw(1, 1, vec![ds]));
            }
            Op::Recip(a) => accumulate(grads, *a, g.zip_map(out, |x, y| -x * y * y)),
            Op::Relu(a) => {
                accumulate(grads, *a, g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 }))
            }
            Op::Clamp(a, lo, hi) => accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |x, y| if y > *lo && y < *hi { x } else { 0.0 }),
            ),
            Op::Abs(a) => accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |x, y| {
                    if y > 0.0 {
                        x
                    } else if y < 0.0 {
                        -x
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Square(a) => accumulate(grads, *a, g.zip_map(val(*a), |x, y| 2.0 * x * y)),
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => accumulate(grads, *a, g.zip_map(val(*a), |x, y| x / y)),
            Op::Tanh(a) => accumulate(grads, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Softplus(a) => accumulate(
                grads,
                *a,
                g.zip_map(val(*a), |x, y| x * sigmoid(y)),
            ),
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, DenseMatrix::filled(r, c, g.get(0, 0)));
            }
            Op::SoftmaxCols(a) => accumulate(grads, *a, softmax_cols_backward(out, g)),
            Op::SoftmaxRows(a) => {
                let gi = softmax_cols_backward(&out.transpose(), &g.transpose());
                accumulate(grads, *a, gi.transpose());
            }
            Op::CumsumCols(a) => {
                let mut gi = g.clone();
                let cols = gi.cols();
                for row in gi.as_mut_slice().chunks_mut(cols.max(1)) {
                    for c in (0..row.len().saturating_sub(1)).rev() {
                        row[c] += row[c + 1];
                    }
                }
                accumulate(grads, *a, gi);
            }
            Op::DiffCols(a) => {
                let (rows, cols) = val(*a).shape();
                let mut gi = DenseMatrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..g.cols() {
                        let d = g.get(r, c);
                        gi.set(r, c + 1, gi.get(r, c + 1) + d);
                        gi.set(r, c, gi.get(r, c) - d);
                    }
                }
                accumulate(grads, *a, gi);
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = val(*a).shape();
                let mut gi = DenseMatrix::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..g.cols() {
                        gi.set(r, start + c, g.get(r, c));
                    }
                }
                accumulate(grads, *a, gi);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let rows = g.rows();
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * (g.cols() - ca));
                for r in 0..rows {
                    ga.extend_from_slice(&g.row(r)[..ca]);
                    gb.extend_from_slice(&g.row(r)[ca..]);
                }
                accumulate(grads, *a, DenseMatrix::from_raw(rows, ca, ga));
                accumulate(grads, *b, DenseMatrix::from_raw(rows, g.cols() - ca, gb));
            }
            Op::SqDistOuter(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (n, m) = (va.cols(), vb.cols());
                let mut ga = vec![0.0; n];
                let mut gb = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        let d = 2.0 * (va.get(0, i) - vb.get(0, j)) * g.get(i, j);
                        ga[i] += d;
                        gb[j] -= d;
                    }
                }
                accumulate(grads, *a, DenseMatrix::from_raw(1, n, ga));
                accumulate(grads, *b, DenseMatrix::from_raw(1, m, gb));
            }
            Op::GatherRows(table, ids) => {
                let (rows, cols) = val(*table).shape();
                let mut gt = DenseMatrix::zeros(rows, cols);
                for (k, &id) in ids.iter().enumerate() {
                    for c in 0..cols {
                        gt.set(id, c, gt.get(id, c) + g.get(k, c));
                    }
                }
                accumulate(grads, *table, gt);
            }
            Op::ShiftRows(a, k) => accumulate(grads, *a, shift_rows_value(g, -k)),
        }
    }
}

fn accumulate(grads: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shift_rows_value(m: &DenseMatrix, k: isize) -> DenseMatrix {
    let (rows, cols) = m.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for r in 0..rows {
        let src = r as isize - k;
        if (0..rows as isize).contains(&src) {
            out.as_mut_slice()[r * cols..(r + 1) * cols].copy_from_slice(m.row(src as usize));
        }
    }
    out
}

/// Column softmax with the per-column maximum subtracted before `exp`.
pub(crate) fn softmax_cols_value(m: &DenseMatrix) -> DenseMatrix {
    let (rows, cols) = m.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for c in 0..cols {
        let max = (0..rows).map(|r| m.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in 0..rows {
            let e = (m.get(r, c) - max).exp();
            out.set(r, c, e);
            total += e;
        }
        for r in 0..rows {
            out.set(r, c, out.get(r, c) / total);
        }
    }
    out
}

fn softmax_cols_backward(s: &DenseMatrix, g: &DenseMatrix) -> DenseMatrix {
    let (rows, cols) = s.shape();
    let mut out = DenseMatrix::zeros(rows, cols);
    for c in 0..cols {
        let dot: f64 = (0..rows).map(|r| s.get(r, c) * g.get(r, c)).sum();
        for r in 0..rows {
            out.set(r, c, s.get(r, c) * (g.get(r, c) - dot));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![3.0]]));
        let g = t.backward(x).unwrap();
        assert_eq!(t.value(x).get(0, 0), 3.0);
        assert_eq!(g.wrt(x).get(0, 0), 1.0);
    }

    #[test]
    fn softmax_normalizes_and_has_zero_sum_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![1.0, -2.0, 700.0], vec![0.5, 3.0, 699.0]]));
        let s = t.softmax_cols(x);
        for c in t.value(s).col_sums() {
            assert!((c - 1.0).abs() < 1e-12);
        }
        let r = t.softmax_rows(x);
        for c in t.value(r).row_sums() {
            assert!((c - 1.0).abs() < 1e-12);
        }
        let g = t.backward(s).unwrap();
        assert!(g.wrt(x).as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn cumsum_backward_is_reverse_cumsum() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![1.0, 2.0, 3.0, 4.0]]));
        let c = t.cumsum_cols(x);
        assert_eq!(t.value(c).as_slice(), &[1.0, 3.0, 6.0, 10.0]);
        let w = t.leaf(m(&[vec![0.5, -1.0, 2.0, 0.25]]));
        let y = t.mul(c, w);
        let g = t.backward(y).unwrap();
        // reverse cumsum of [0.5, -1, 2, 0.25]
        assert_eq!(g.wrt(x).as_slice(), &[1.75, 1.25, 2.25, 0.25]);
    }

    #[test]
    fn relu_and_clamp_subgradients_at_kinks_are_zero() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![0.0, 1.0, -1.0]]));
        let r = t.relu(x);
        let g = t.backward(r).unwrap();
        assert_eq!(g.wrt(x).as_slice(), &[0.0, 1.0, 0.0]);

        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![0.0, 0.5, 1.0, 2.0]]));
        let c = t.clamp(x, 0.0, 1.0);
        let g = t.backward(c).unwrap();
        assert_eq!(g.wrt(x).as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(t.min_kink_gap(), 0.0);
    }

    #[test]
    fn non_finite_reports_node() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![0.0]]));
        let y = t.recip(x);
        let z = t.scale(y, 2.0);
        assert_eq!(t.backward(z).unwrap_err(), Error::NonFinite { node: y.index() });
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[vec![3.0]]));
        let y = t.mul(x, x);
        let z = t.add(y, x);
        let g = t.backward(z).unwrap();
        assert_eq!(g.wrt(x).get(0, 0), 7.0);
    }
}
