//! Sparse triplet storage and the dense SPD solves used by the Newton oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dimension, Error, Result};

/// Compressed-row sparse matrix built from a triplet list.
///
/// Construction canonicalizes the triplets: entries are sorted by
/// `(row, col)` and duplicates are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(dimension(format!("triplet ({i}, {j}) outside a {nrows}x{ncols} matrix")));
            }
            if !v.is_finite() {
                return Err(dimension(format!("non-finite entry at ({i}, {j})")));
            }
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).expect("dense entries are in range")
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[]).expect("empty triplet list")
    }

    pub fn identity(n: usize) -> Self {
        let trip: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trip).expect("diagonal is in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Canonical triplets in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.push((i, self.col_idx[p], self.values[p]));
            }
        }
        out
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// `A^T diag(d) A` as a dense matrix.
    pub fn weighted_gram(&self, d: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(d.len(), self.nrows);
        let mut out = DMatrix::zeros(self.ncols, self.ncols);
        for i in 0..self.nrows {
            if d[i] == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (p, &j) in cols.iter().enumerate() {
                let w = d[i] * vals[p];
                for (q, &l) in cols.iter().enumerate() {
                    out[(j, l)] += w * vals[q];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        DVector::from_fn(self.nrows, |i, _| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.values[p] * x[self.col_idx[p]]).sum()
        })
    }

    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(y.len(), self.nrows);
        let mut out = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[p]] += self.values[p] * y[i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && {
            let d = self.to_dense();
            (&d - d.transpose()).amax() <= tol
        }
    }

    /// Spectral norm estimate by power iteration on `A^T A`.
    pub fn op_norm(&self) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        // deterministic, non-degenerate start
        let mut v = DVector::from_fn(self.ncols, |j, _| 1.0 + 0.1 * ((j * 7919 % 13) as f64));
        v /= v.norm();
        let mut estimate = 0.0;
        for _ in 0..10_000 {
            let w = self.tr_mul_vec(&self.mul_vec(&v));
            let norm = w.norm();
            if norm == 0.0 {
                return estimate;
            }
            let next = norm.sqrt();
            v = w / norm;
            if (next - estimate).abs() <= 1e-15 * next {
                estimate = next;
                break;
            }
            estimate = next;
        }
        estimate
    }
}

/// Cholesky solve of `H x = rhs` for a symmetric positive-definite `H`.
///
/// If the factorization fails, the diagonal is lifted once by
/// `1e-12 (1 + trace/n)` and the event is logged.
pub fn spd_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let n = h.nrows().max(1);
    let lift = 1e-12 * (1.0 + h.trace().abs() / n as f64);
    log::warn!("Cholesky failed, retrying with diagonal lift {lift:e}");
    let mut lifted = h.clone();
    for i in 0..h.nrows() {
        lifted[(i, i)] += lift;
    }
    lifted
        .cholesky()
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::Factorization(format!("matrix of order {} is not positive definite", h.nrows())))
}
