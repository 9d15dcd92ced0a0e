//! Compressed-sparse-row matrices carrying the graph adjacency.

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// CSR matrix. Column indices are sorted within each row, coordinates are
/// unique and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<S> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> SparseMatrix<S> {
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, S)>) -> Result<Self> {
        triplets.retain(|t| t.2 != S::zero());
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Operand {
                    op: "from_triplets",
                    msg: format!("entry ({r}, {c}) outside {rows}x{cols}"),
                });
            }
            if prev == Some((r, c)) {
                return Err(Error::Operand {
                    op: "from_triplets",
                    msg: format!("duplicate entry ({r}, {c})"),
                });
            }
            prev = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![S::one(); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => S::zero(),
        }
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.cols, self.rows, t).expect("transpose of a valid matrix")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn row_sums(&self) -> Vec<S> {
        (0..self.rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Adds `value` to every diagonal entry.
    pub fn add_diagonal(&self, value: S) -> Result<Self> {
        let n = self.rows.min(self.cols);
        let mut t: Vec<_> = self.triplets().filter(|&(i, j, _)| i != j).collect();
        for i in 0..n {
            t.push((i, i, self.get(i, i) + value));
        }
        Self::from_triplets(self.rows, self.cols, t)
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let lo = self.indptr[start];
        let hi = self.indptr[end];
        Self {
            rows: end - start,
            cols: self.cols,
            indptr: self.indptr[start..=end].iter().map(|p| p - lo).collect(),
            indices: self.indices[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }

    /// Sparse × dense product.
    pub fn spmm(&self, dense: &Matrix<S>) -> Result<Matrix<S>> {
        if self.cols != dense.rows() {
            return Err(Error::Shape {
                op: "spmm",
                lhs: self.shape(),
                rhs: dense.shape(),
            });
        }
        let k = dense.cols();
        let mut out = Matrix::zeros(self.rows, k);
        for i in 0..self.rows {
            let orow = out.row_mut(i);
            for (j, v) in self.row(i) {
                for (o, &x) in orow.iter_mut().zip(dense.row(j)) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn cast<T: Scalar>(&self) -> SparseMatrix<T> {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }

    pub fn scale(&self, c: S) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }
}

/// Symmetric normalization `D^{-1/2} A D^{-1/2}` with `D` the row sums of `A`.
pub fn normalize_adjacency<S: Scalar>(a: &SparseMatrix<S>) -> Result<SparseMatrix<S>> {
    if a.rows != a.cols {
        return Err(Error::Shape {
            op: "normalize_adjacency",
            lhs: a.shape(),
            rhs: a.shape(),
        });
    }
    let sums = a.row_sums();
    let mut inv_sqrt = Vec::with_capacity(sums.len());
    for (i, &s) in sums.iter().enumerate() {
        if s <= S::zero() {
            return Err(Error::IsolatedNode(i));
        }
        inv_sqrt.push(S::one() / s.sqrt());
    }
    let mut out = a.clone();
    for i in 0..out.rows {
        for k in out.indptr[i]..out.indptr[i + 1] {
            let j = out.indices[k];
            // scale pair first so mirrored entries round identically
            out.values[k] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}
