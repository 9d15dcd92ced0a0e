//! Minimal reverse-mode automatic differentiation over dense matrices with
//! constant sparse operands.
//!
//! A [`Tape`] records every primitive in execution order. [`Tape::backward`]
//! walks it once in reverse, summing gradients at fan-out, and then clears
//! the tape. Sparse operands are data: they never receive gradients.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Contiguous segments over a sorted id sequence, stored as offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    /// `ids` must be sorted ascending, each `< n_segments`.
    pub fn from_sorted_ids(ids: &[usize], n_segments: usize) -> Result<Self> {
        let mut offsets = vec![0usize; n_segments + 1];
        let mut prev = 0;
        for &id in ids {
            if id < prev || id >= n_segments {
                return Err(Error::Operand {
                    op: "segments",
                    msg: format!("segment ids must be sorted and below {n_segments}"),
                });
            }
            prev = id;
            offsets[id + 1] += 1;
        }
        for s in 0..n_segments {
            offsets[s + 1] += offsets[s];
        }
        Ok(Self { offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_items(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }
}

/// A constant sparse operand together with its transpose for the backward pass.
#[derive(Debug, Clone)]
pub struct SparseOperand<S> {
    forward: SparseMatrix<S>,
    transposed: SparseMatrix<S>,
}

impl<S: Scalar> SparseOperand<S> {
    pub fn new(m: SparseMatrix<S>) -> Arc<Self> {
        let transposed = m.transpose();
        Arc::new(Self {
            forward: m,
            transposed,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix<S> {
        &self.forward
    }
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseOperand<S>>, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SliceRows(Var, usize),
    Relu(Var),
    LeakyRelu(Var, S),
    Elu(Var),
    Exp(Var),
    Log(Var),
    RowSoftmax(Var),
    SegmentSoftmax(Var, Arc<Segments>),
    SegmentWeightedSum(Var, Var, Arc<Segments>),
    Dropout(Var, Vec<S>),
    Sum(Var),
    MaskedCrossEntropy(Var, Arc<[usize]>, Arc<[usize]>),
}

#[derive(Debug)]
struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Matrix<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Shape { op, lhs, rhs }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn live(&self) -> Result<()> {
        if self.consumed {
            return Err(Error::Operand {
                op: "tape",
                msg: "tape already consumed by backward".into(),
            });
        }
        Ok(())
    }

    fn push(&mut self, name: &'static str, value: Matrix<S>, op: Op<S>, inputs: &[Var]) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Matrix<S>, requires_grad: bool) -> Result<Var> {
        self.live()?;
        if !value.all_finite() {
            return Err(Error::NonFinite("leaf"));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Gradient-bearing input.
    pub fn param(&mut self, value: Matrix<S>) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix<S>) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn spmm(&mut self, s: &Arc<SparseOperand<S>>, x: Var) -> Result<Var> {
        self.live()?;
        let out = s.forward.spmm(self.value(x))?;
        self.push("spmm", out, Op::SpMM(Arc::clone(s), x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va.shape(), vb.shape()));
        }
        let out = va.zip_map(vb, |x, y| x + y);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.live()?;
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va.shape(), vb.shape()));
        }
        let out = va.zip_map(vb, |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: S) -> Result<Var> {
        self.live()?;
        let out = self.value(a).map(|x| x * c);
        self.push("scale", out, Op::Scale(a, c), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.live()?;
        let Some(&first) = parts.first() else {
            return Err(Error::Operand {
                op: "concat_cols",
                msg: "no operands".into(),
            });
        };
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let r = self.value(p).row(i);
                out.row_mut(i)[c0..c0 + r.len()].copy_from_slice(r);
                c0 += r.len();
            }
        }
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Rows of `x` at `indices` (repetition allowed).
    pub fn gather_rows(&mut self, x: Var, indices: Arc<[usize]>) -> Result<Var> {
        self.live()?;
        let v = self.value(x);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::Operand {
                op: "gather_rows",
                msg: format!("row {bad} out of {}", v.rows()),
            });
        }
        let mut out = Matrix::zeros(indices.len(), v.cols());
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(v.row(i));
        }
        self.push("gather_rows", out, Op::GatherRows(x, indices), &[x])
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        self.live()?;
        let v = self.value(x);
        if start > end || end > v.rows() {
            return Err(Error::Operand {
                op: "slice_rows",
                msg: format!("range {start}..{end} out of {}", v.rows()),
            });
        }
        let c = v.cols();
        let out = Matrix::from_vec(end - start, c, v.as_slice()[start * c..end * c].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(x, start), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(x).map(|v| v.max(S::zero()));
        self.push("relu", out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: S) -> Result<Var> {
        self.live()?;
        let out = self.value(x).map(|v| if v > S::zero() { v } else { v * slope });
        self.push("leaky_relu", out, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn elu(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(x).map(|v| if v > S::zero() { v } else { v.exp_m1() });
        self.push("elu", out, Op::Elu(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(x).map(S::exp);
        self.push("exp", out, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let out = self.value(x).map(S::ln);
        self.push("log", out, Op::Log(x), &[x])
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let mut out = self.value(x).clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        self.push("row_softmax", out, Op::RowSoftmax(x), &[x])
    }

    /// Softmax of each column within every segment of rows.
    pub fn segment_softmax(&mut self, x: Var, segments: &Arc<Segments>) -> Result<Var> {
        self.live()?;
        let v = self.value(x);
        if v.rows() != segments.n_items() {
            return Err(shape_err("segment_softmax", v.shape(), (segments.n_items(), v.cols())));
        }
        let mut out = v.clone();
        let mut buf = Vec::new();
        for s in 0..segments.len() {
            let r = segments.range(s);
            for c in 0..v.cols() {
                buf.clear();
                buf.extend(r.clone().map(|e| v[(e, c)]));
                softmax_in_place(&mut buf);
                for (k, e) in r.clone().enumerate() {
                    out[(e, c)] = buf[k];
                }
            }
        }
        self.push("segment_softmax", out, Op::SegmentSoftmax(x, Arc::clone(segments)), &[x])
    }

    /// `out[s] = Σ_{e in segment s} weights[e] · values[e]`; empty segments give zero rows.
    pub fn segment_weighted_sum(&mut self, values: Var, weights: Var, segments: &Arc<Segments>) -> Result<Var> {
        self.live()?;
        let (v, w) = (self.value(values), self.value(weights));
        if v.rows() != segments.n_items() || w.shape() != (v.rows(), 1) {
            return Err(shape_err("segment_weighted_sum", v.shape(), w.shape()));
        }
        let mut out = Matrix::zeros(segments.len(), v.cols());
        for s in 0..segments.len() {
            for e in segments.range(s) {
                let we = w[(e, 0)];
                for (o, &x) in out.row_mut(s).iter_mut().zip(v.row(e)) {
                    *o += we * x;
                }
            }
        }
        self.push(
            "segment_weighted_sum",
            out,
            Op::SegmentWeightedSum(values, weights, Arc::clone(segments)),
            &[values, weights],
        )
    }

    /// Inverted dropout; `p = 0` returns `x` unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, seed: u64) -> Result<Var> {
        self.live()?;
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Operand {
                op: "dropout",
                msg: format!("rate {p} outside [0,1)"),
            });
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = S::lit(1.0 / (1.0 - p));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = self.value(x);
        let mask: Vec<S> = (0..v.len())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), v.as_slice().iter().zip(&mask).map(|(&a, &m)| a * m).collect())?;
        self.push("dropout", out, Op::Dropout(x, mask), &[x])
    }

    /// Sum of all entries as a 1×1 value.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.live()?;
        let out = Matrix::filled(1, 1, self.value(x).sum());
        self.push("sum", out, Op::Sum(x), &[x])
    }

    /// Mean over `rows` of `-log softmax(logits[row])[labels[row]]`.
    /// `labels` is indexed by logit row.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: Arc<[usize]>, rows: Arc<[usize]>) -> Result<Var> {
        self.live()?;
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let l = self.value(logits);
        if labels.len() != l.rows() {
            return Err(shape_err("masked_cross_entropy", l.shape(), (labels.len(), 1)));
        }
        let mut total = S::zero();
        for &r in rows.iter() {
            let row = l.row(r);
            let y = labels[r];
            if y >= row.len() {
                return Err(Error::Operand {
                    op: "masked_cross_entropy",
                    msg: format!("label {y} out of {} classes", row.len()),
                });
            }
            total += log_sum_exp(row) - row[y];
        }
        let out = Matrix::filled(1, 1, total / S::lit(rows.len() as f64));
        self.push("masked_cross_entropy", out, Op::MaskedCrossEntropy(logits, labels, rows), &[logits])
    }

    /// Reverse sweep from a scalar loss. The tape is cleared afterward.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        if self.shape(loss) != (1, 1) {
            return Err(shape_err("backward", self.shape(loss), (1, 1)));
        }
        let mut grads: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, S::one()));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        self.nodes.clear();
        self.consumed = true;
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, id: usize, g: &Matrix<S>, grads: &mut [Option<Matrix<S>>]) -> Result<()> {
        let node = &self.nodes[id];
        let mut acc = |v: Var, m: Matrix<S>| {
            if self.wants(v) {
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&m),
                    slot => *slot = Some(m),
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    acc(*a, g.matmul_t(self.value(*b))?);
                }
                if self.wants(*b) {
                    acc(*b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::SpMM(s, x) => acc(*x, s.transposed.spmm(g)?),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| x * *c)),
            Op::ConcatCols(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    acc(p, Matrix::from_fn(g.rows(), pc, |i, j| g[(i, c0 + j)]));
                    c0 += pc;
                }
            }
            Op::GatherRows(x, idx) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = Matrix::zeros(rows, cols);
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*x, gx);
            }
            Op::SliceRows(x, start) => {
                let (rows, cols) = self.shape(*x);
                let mut gx = Matrix::zeros(rows, cols);
                gx.as_mut_slice()[start * cols..start * cols + g.len()].copy_from_slice(g.as_slice());
                acc(*x, gx);
            }
            Op::Relu(x) => acc(*x, g.zip_map(self.value(*x), |d, v| if v > S::zero() { d } else { S::zero() })),
            Op::LeakyRelu(x, slope) => {
                acc(*x, g.zip_map(self.value(*x), |d, v| if v > S::zero() { d } else { d * *slope }))
            }
            Op::Elu(x) => {
                let out = &node.value;
                let gx = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                    if self.value(*x)[(i, j)] > S::zero() {
                        g[(i, j)]
                    } else {
                        g[(i, j)] * (out[(i, j)] + S::one())
                    }
                });
                acc(*x, gx);
            }
            Op::Exp(x) => acc(*x, g.zip_map(&node.value, |d, y| d * y)),
            Op::Log(x) => acc(*x, g.zip_map(self.value(*x), |d, v| d / v)),
            Op::RowSoftmax(x) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: S = y.row(i).iter().zip(g.row(i)).map(|(&a, &b)| a * b).sum();
                    for j in 0..y.cols() {
                        gx[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                    }
                }
                acc(*x, gx);
            }
            Op::SegmentSoftmax(x, segs) => {
                let y = &node.value;
                let mut gx = Matrix::zeros(y.rows(), y.cols());
                for s in 0..segs.len() {
                    for c in 0..y.cols() {
                        let dot: S = segs.range(s).map(|e| y[(e, c)] * g[(e, c)]).sum();
                        for e in segs.range(s) {
                            gx[(e, c)] = y[(e, c)] * (g[(e, c)] - dot);
                        }
                    }
                }
                acc(*x, gx);
            }
            Op::SegmentWeightedSum(values, weights, segs) => {
                let (v, w) = (self.value(*values), self.value(*weights));
                if self.wants(*values) {
                    let mut gv = Matrix::zeros(v.rows(), v.cols());
                    for s in 0..segs.len() {
                        for e in segs.range(s) {
                            let we = w[(e, 0)];
                            for (o, &d) in gv.row_mut(e).iter_mut().zip(g.row(s)) {
                                *o = we * d;
                            }
                        }
                    }
                    acc(*values, gv);
                }
                if self.wants(*weights) {
                    let mut gw = Matrix::zeros(w.rows(), 1);
                    for s in 0..segs.len() {
                        for e in segs.range(s) {
                            gw[(e, 0)] = v.row(e).iter().zip(g.row(s)).map(|(&a, &b)| a * b).sum();
                        }
                    }
                    acc(*weights, gw);
                }
            }
            Op::Dropout(x, mask) => {
                let gx = Matrix::from_vec(g.rows(), g.cols(), g.as_slice().iter().zip(mask).map(|(&d, &m)| d * m).collect())?;
                acc(*x, gx);
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Matrix::filled(r, c, g[(0, 0)]));
            }
            Op::MaskedCrossEntropy(logits, labels, rows) => {
                let l = self.value(*logits);
                let scale = g[(0, 0)] / S::lit(rows.len() as f64);
                let mut gl = Matrix::zeros(l.rows(), l.cols());
                let mut p = Vec::new();
                for &r in rows.iter() {
                    p.clear();
                    p.extend_from_slice(l.row(r));
                    softmax_in_place(&mut p);
                    p[labels[r]] -= S::one();
                    for (o, &q) in gl.row_mut(r).iter_mut().zip(&p) {
                        *o += q * scale;
                    }
                }
                acc(*logits, gl);
            }
        }
        Ok(())
    }
}

fn softmax_in_place<S: Scalar>(xs: &mut [S]) {
    let Some(m) = xs.iter().copied().reduce(S::max) else { return };
    let mut z = S::zero();
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in xs.iter_mut() {
        *x /= z;
    }
}

fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let m = xs.iter().copied().fold(S::neg_infinity(), S::max);
    m + xs.iter().map(|&x| (x - m).exp()).sum::<S>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::<f64>::new();
        let w = t.param(Matrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64)).unwrap();
        let l = t.sum(w).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap(), &Matrix::filled(2, 2, 1.0));
    }

    #[test]
    fn zero_scale_gives_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let w = t.param(Matrix::filled(2, 3, 4.0)).unwrap();
        let z = t.scale(w, 0.0).unwrap();
        let l = t.sum(z).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap(), &Matrix::zeros(2, 3));
    }

    #[test]
    fn backward_twice_errors() {
        let mut t = Tape::<f64>::new();
        let w = t.param(Matrix::filled(1, 1, 1.0)).unwrap();
        let l = t.sum(w).unwrap();
        t.backward(l).unwrap();
        assert!(matches!(t.backward(l), Err(Error::BackwardTwice)));
        assert!(t.is_empty());
    }

    #[test]
    fn identity_spmm_passes_gradient_through() {
        let mut t = Tape::<f64>::new();
        let x0 = Matrix::from_fn(3, 2, |i, j| (i as f64) - (j as f64) * 0.5);
        let x = t.param(x0.clone()).unwrap();
        let eye = SparseOperand::new(SparseMatrix::identity(3));
        let y = t.spmm(&eye, x).unwrap();
        assert_eq!(t.value(y), &x0);
        let up = t.constant(Matrix::from_fn(3, 2, |i, j| (i * 10 + j) as f64)).unwrap();
        let prod = t.mul(y, up).unwrap();
        let l = t.sum(prod).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &Matrix::from_fn(3, 2, |i, j| (i * 10 + j) as f64));
    }

    #[test]
    fn softmax_uniform_on_equal_row() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Matrix::filled(1, 4, 3.25)).unwrap();
        let y = t.row_softmax(x).unwrap();
        for &v in t.value(y).as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Matrix::zeros(2, 3)).unwrap();
        let b = t.constant(Matrix::zeros(2, 2)).unwrap();
        match t.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => assert_eq!((lhs, rhs), ((2, 3), (2, 2))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_forward_errors() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Matrix::filled(1, 1, -1.0)).unwrap();
        assert!(matches!(t.log(a), Err(Error::NonFinite("log"))));
        let b = t.constant(Matrix::filled(1, 1, 1e6)).unwrap();
        assert!(matches!(t.exp(b), Err(Error::NonFinite("exp"))));
    }

    #[test]
    fn dropout_reproducible_and_identity_at_zero() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Matrix::filled(4, 5, 1.0)).unwrap();
        assert_eq!(t.dropout(x, 0.0, 1).unwrap(), x);
        let a = t.dropout(x, 0.5, 9).unwrap();
        let b = t.dropout(x, 0.5, 9).unwrap();
        assert_eq!(t.value(a), t.value(b));
        assert!(t.value(a).as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(t.dropout(x, 1.0, 0).is_err());
    }

    #[test]
    fn segment_softmax_sums_to_one_and_handles_empty() {
        let segs = Arc::new(Segments::from_sorted_ids(&[0, 0, 2, 2, 2], 4).unwrap());
        let mut t = Tape::<f64>::new();
        let x = t.constant(Matrix::from_vec(5, 1, vec![0.3, -1.0, 2.0, 2.0, 5.0]).unwrap()).unwrap();
        let y = t.segment_softmax(x, &segs).unwrap();
        let v = t.value(y);
        assert!((v[(0, 0)] + v[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((v[(2, 0)] + v[(3, 0)] + v[(4, 0)] - 1.0).abs() < 1e-12);
        let vals = t.constant(Matrix::filled(5, 2, 1.0)).unwrap();
        let s = t.segment_weighted_sum(vals, y, &segs).unwrap();
        assert_eq!(t.value(s).row(1), &[0.0, 0.0]);
        assert_eq!(t.value(s).row(3), &[0.0, 0.0]);
        assert!(Segments::from_sorted_ids(&[1, 0], 2).is_err());
    }

    #[test]
    fn cross_entropy_uniform_is_ln_c() {
        let mut t = Tape::<f64>::new();
        let l = t.constant(Matrix::zeros(3, 4)).unwrap();
        let loss = t.masked_cross_entropy(l, vec![0, 1, 3].into(), vec![0, 2].into()).unwrap();
        assert!((t.value(loss)[(0, 0)] - 4f64.ln()).abs() < 1e-15);
        assert!(matches!(t.masked_cross_entropy(l, vec![0, 1, 3].into(), vec![].into()), Err(Error::EmptyMask)));
    }
}
