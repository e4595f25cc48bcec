//! Constraint matrix storage and small spectral helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Above this dimension, extreme eigenvalues are found iteratively.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed, explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows {
                return Err(Error::IndexOutOfRange { index: r, len: nrows });
            }
            if c >= ncols {
                return Err(Error::IndexOutOfRange { index: c, len: ncols });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse matrix entry"));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut m = CsrMatrix { nrows, ncols, row_ptr, col_idx, values };
        m.drop_zeros();
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|v| *v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.values[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    values.push(self.values[k]);
                }
            }
            row_ptr[i + 1] = values.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.values = values;
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &triplets).expect("dense matrix entries are in range")
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

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                a[(i, *c)] = *v;
            }
        }
        a
    }
}

#[derive(Debug, Clone)]
enum Storage {
    // Transposed so that each constraint row is a contiguous column.
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

/// The matrix `A` of a system `Ax <= b`, stored dense or sparse with row-oriented access.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    storage: Storage,
}

impl ConstraintMatrix {
    pub fn from_dense(a: DMatrix<f64>) -> Self {
        ConstraintMatrix { storage: Storage::Dense(a.transpose()) }
    }

    pub fn from_csr(a: CsrMatrix) -> Self {
        ConstraintMatrix { storage: Storage::Sparse(a) }
    }

    /// Dense matrix from row slices; panics if rows have unequal length.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == n), "ragged rows");
        Self::from_dense(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn nrows(&self) -> usize {
        match &self.storage {
            Storage::Dense(t) => t.ncols(),
            Storage::Sparse(s) => s.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match &self.storage {
            Storage::Dense(t) => t.nrows(),
            Storage::Sparse(s) => s.ncols(),
        }
    }

    /// Number of stored entries (all entries for dense storage).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(t) => t.len(),
            Storage::Sparse(s) => s.nnz(),
        }
    }

    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        match &self.storage {
            Storage::Dense(t) => t.column(i).dot(x),
            Storage::Sparse(s) => {
                let (cols, vals) = s.row(i);
                cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum()
            }
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        match &self.storage {
            Storage::Dense(t) => t.column(i).norm_squared(),
            Storage::Sparse(s) => s.row(i).1.iter().map(|v| v * v).sum(),
        }
    }

    /// `y += alpha * a_i`.
    pub fn axpy_row(&self, i: usize, alpha: f64, y: &mut DVector<f64>) {
        match &self.storage {
            Storage::Dense(t) => y.axpy(alpha, &t.column(i), 1.0),
            Storage::Sparse(s) => {
                let (cols, vals) = s.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    y[*c] += alpha * v;
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        match &self.storage {
            Storage::Dense(t) => t.column(i).into_owned(),
            Storage::Sparse(s) => {
                let mut r = DVector::zeros(s.ncols());
                let (cols, vals) = s.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    r[*c] = *v;
                }
                r
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(t) => t[(j, i)],
            Storage::Sparse(s) => {
                let (cols, vals) = s.row(i);
                cols.binary_search(&j).map_or(0.0, |k| vals[k])
            }
        }
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.storage {
            Storage::Dense(t) => t.tr_mul(x),
            Storage::Sparse(_) => DVector::from_fn(self.nrows(), |i, _| self.row_dot(i, x)),
        }
    }

    /// `A^T s`.
    pub fn tr_mul_vec(&self, s: &DVector<f64>) -> DVector<f64> {
        match &self.storage {
            Storage::Dense(t) => t * s,
            Storage::Sparse(_) => {
                let mut y = DVector::zeros(self.ncols());
                for i in 0..self.nrows() {
                    if s[i] != 0.0 {
                        self.axpy_row(i, s[i], &mut y);
                    }
                }
                y
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(t) => t.transpose(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    /// Calls `f(row, col, value)` for every stored nonzero.
    pub fn for_each_nonzero(&self, mut f: impl FnMut(usize, usize, f64)) {
        match &self.storage {
            Storage::Dense(t) => {
                for i in 0..t.ncols() {
                    for (j, v) in t.column(i).iter().enumerate() {
                        if *v != 0.0 {
                            f(i, j, *v);
                        }
                    }
                }
            }
            Storage::Sparse(s) => {
                for i in 0..s.nrows() {
                    let (cols, vals) = s.row(i);
                    for (c, v) in cols.iter().zip(vals) {
                        f(i, *c, *v);
                    }
                }
            }
        }
    }
}

/// Smallest and largest eigenvalues of a symmetric matrix.
pub fn sym_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut v: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power iteration.
pub fn power_iteration(
    n: usize,
    mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i as f64) * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let w = apply(&v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            return next;
        }
        lambda = next;
    }
    lambda
}
