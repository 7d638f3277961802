//! Square compressed-row sparse matrices and multi-channel edge tensors.
//!
//! Every public constructor and every kernel returns canonical form: column
//! indices strictly increasing within each row. Stored values are
//! nonnegative; an absent entry means "no edge".

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Dense;
use crate::error::{Error, Result};

/// One `n x n` edge-feature channel in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: vec![0; n + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicates are
    /// summed; entries whose value is exactly zero are not stored.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, v) in triplets {
            if i >= n || j >= n || !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            col_indices.push(j);
            values.push(v);
            row_offsets[i + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let m = SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        };
        Ok(m.drop_exact_zeros())
    }

    /// Validates raw compressed-row arrays.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        };
        m.check()?;
        Ok(m)
    }

    /// Dense row-major `n x n` slice to sparse; zeros are dropped.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::Shape {
                op: "SparseMatrix::from_dense",
                expected: (n, n),
                found: (dense.len(), 1),
            });
        }
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = dense[i * n + j];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for (i, j, v) in self.iter() {
            out[i * self.n + j] = v;
        }
        out
    }

    /// Same pattern, new values. Values must be nonnegative and finite.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Shape {
                op: "SparseMatrix::with_values",
                expected: (self.values.len(), 1),
                found: (values.len(), 1),
            });
        }
        let m = self.with_values_unchecked(values);
        m.check()?;
        Ok(m)
    }

    /// Same pattern, arbitrary (possibly signed) values. Used by backward
    /// passes, which push signed gradients through the same kernels.
    pub(crate) fn with_values_unchecked(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        SparseMatrix {
            n: self.n,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values,
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.n;
        if self.row_offsets.len() != n + 1 || self.row_offsets[0] != 0 {
            return Err(Error::NotCanonical("row_offsets length or origin"));
        }
        if self.row_offsets[n] != self.values.len() || self.col_indices.len() != self.values.len() {
            return Err(Error::NotCanonical("row_offsets end does not match nnz"));
        }
        for i in 0..n {
            let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if s > e {
                return Err(Error::NotCanonical("row_offsets decreasing"));
            }
            for k in s..e {
                let j = self.col_indices[k];
                if j >= n {
                    return Err(Error::Index { index: j, bound: n });
                }
                if k > s && self.col_indices[k - 1] >= j {
                    return Err(Error::NotCanonical("columns not strictly increasing"));
                }
                let v = self.values[k];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_canonical(&self) -> bool {
        self.check().is_ok()
    }

    fn drop_exact_zeros(self) -> Self {
        if self.values.iter().all(|&v| v != 0.0) {
            return self;
        }
        let mut row_offsets = vec![0usize; self.n + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets[i + 1] = values.len();
        }
        SparseMatrix {
            n: self.n,
            row_offsets,
            col_indices,
            values,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    #[inline]
    pub fn row_range(&self, i: usize) -> core::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    /// Row-major iteration over stored `(i, j, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// Stored value at `(i, j)`, or `None` when the entry is absent.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n == other.n
            && self.row_offsets == other.row_offsets
            && self.col_indices == other.col_indices
    }

    /// `self * x` for a dense `n x f` matrix.
    pub fn spmm(&self, x: &Dense) -> Result<Dense> {
        if x.rows() != self.n {
            return Err(Error::Shape {
                op: "spmm",
                expected: (self.n, x.cols()),
                found: x.shape(),
            });
        }
        let f = x.cols();
        let mut out = Dense::zeros(self.n, f);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let out_row = out.row_mut(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &b) in out_row.iter_mut().zip(x.row(j)) {
                    *o += v * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * x` without materializing the transpose.
    pub fn spmm_t(&self, x: &Dense) -> Result<Dense> {
        if x.rows() != self.n {
            return Err(Error::Shape {
                op: "spmm_t",
                expected: (self.n, x.cols()),
                found: x.shape(),
            });
        }
        let mut out = Dense::zeros(self.n, x.cols());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let src = x.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                for (o, &b) in out.row_mut(j).iter_mut().zip(src) {
                    *o += v * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each output row comes out sorted.
        for (i, j, v) in self.iter() {
            let slot = next[j];
            col_indices[slot] = i;
            values[slot] = v;
            next[j] += 1;
        }
        SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Sparse product `self * other`; every structurally reached entry is kept.
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.matmul_with_drop(other, 0.0)
    }

    /// Sparse product dropping results with `|v| < drop_tol`. With the
    /// default tolerance of zero only structural absence removes an entry.
    pub fn matmul_with_drop(&self, other: &SparseMatrix, drop_tol: f64) -> Result<SparseMatrix> {
        if self.n != other.n {
            return Err(Error::Shape {
                op: "sp_sp_matmul",
                expected: (self.n, self.n),
                found: (other.n, other.n),
            });
        }
        let n = self.n;
        let mut acc = vec![0.0f64; n];
        let mut seen = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let (a_cols, a_vals) = self.row(i);
            for (&k, &av) in a_cols.iter().zip(a_vals) {
                let (b_cols, b_vals) = other.row(k);
                for (&j, &bv) in b_cols.iter().zip(b_vals) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    acc[j] += av * bv;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                let v = acc[j];
                if !(drop_tol > 0.0 && v.abs() < drop_tol) {
                    col_indices.push(j);
                    values.push(v);
                }
                acc[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
            row_offsets.push(values.len());
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// `diag(d) * self`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.n {
            return Err(Error::Shape {
                op: "sp_scale_rows",
                expected: (self.n, 1),
                found: (d.len(), 1),
            });
        }
        let mut values = self.values.clone();
        for i in 0..self.n {
            for k in self.row_range(i) {
                values[k] *= d[i];
            }
        }
        Ok(self.with_values_unchecked(values))
    }

    /// `self * diag(d)`.
    pub fn scale_cols(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.n {
            return Err(Error::Shape {
                op: "sp_scale_cols",
                expected: (self.n, 1),
                found: (d.len(), 1),
            });
        }
        let values = self
            .col_indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| v * d[j])
            .collect();
        Ok(self.with_values_unchecked(values))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&j, &v) in self.col_indices.iter().zip(&self.values) {
            out[j] += v;
        }
        out
    }

    /// Gates each stored entry by a pairwise score evaluated only on the
    /// stored pattern: `result[i][j] = self[i][j] * score(i, j)`.
    pub fn hadamard_dense(&self, mut score: impl FnMut(usize, usize) -> f64) -> SparseMatrix {
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                values.push(v * score(i, j));
            }
        }
        self.with_values_unchecked(values)
    }

    /// Adds a unit diagonal entry to every row lacking one.
    pub fn with_self_loops(&self) -> SparseMatrix {
        let n = self.n;
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        for i in 0..n {
            let (cols, vals) = self.row(i);
            let mut placed = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if !placed && j >= i {
                    if j != i {
                        col_indices.push(i);
                        values.push(1.0);
                    }
                    placed = true;
                }
                col_indices.push(j);
                values.push(v);
            }
            if !placed {
                col_indices.push(i);
                values.push(1.0);
            }
            row_offsets.push(values.len());
        }
        SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn scale(&self, c: f64) -> SparseMatrix {
        self.with_values_unchecked(self.values.iter().map(|v| v * c).collect())
    }
}

/// `P` edge channels over one node set: the tensor `E` of shape `n x n x P`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTensor {
    n: usize,
    channels: Vec<SparseMatrix>,
}

impl EdgeTensor {
    pub fn new(channels: Vec<SparseMatrix>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidConfig("edge tensor needs at least one channel".into()))?;
        let n = first.n();
        for c in &channels {
            if c.n() != n {
                return Err(Error::Shape {
                    op: "EdgeTensor::new",
                    expected: (n, n),
                    found: (c.n(), c.n()),
                });
            }
        }
        Ok(EdgeTensor { n, channels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, p: usize) -> &SparseMatrix {
        &self.channels[p]
    }

    pub fn channels(&self) -> &[SparseMatrix] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<SparseMatrix> {
        self.channels
    }

    pub fn map_channels(&self, f: impl FnMut(&SparseMatrix) -> SparseMatrix) -> EdgeTensor {
        EdgeTensor {
            n: self.n,
            channels: self.channels.iter().map(f).collect(),
        }
    }

    pub fn try_map_channels(
        &self,
        mut f: impl FnMut(usize, &SparseMatrix) -> Result<SparseMatrix>,
    ) -> Result<EdgeTensor> {
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(p, c)| f(p, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(EdgeTensor {
            n: self.n,
            channels,
        })
    }

    pub fn with_self_loops(&self) -> EdgeTensor {
        self.map_channels(SparseMatrix::with_self_loops)
    }
}
