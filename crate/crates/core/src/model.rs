//! Problem data, metric matrices and sketch sets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, sym_eigen_extremes, ConstraintMatrix, DENSE_EIGEN_LIMIT};

/// Cached `B^{-1} A^T S` directions are kept when they fit in this many entries.
const DIRECTION_CACHE_LIMIT: usize = 4_000_000;

/// The linear feasibility problem `Ax <= b`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    a: ConstraintMatrix,
    b: DVector<f64>,
}

impl ProblemInstance {
    pub fn new(a: ConstraintMatrix, b: DVector<f64>) -> Result<Self> {
        let (m, n) = (a.nrows(), a.ncols());
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!("empty constraint matrix ({m}x{n})")));
        }
        if b.len() != m {
            return Err(Error::Dimension { what: "right-hand side", expected: m, found: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let mut finite = true;
        a.for_each_nonzero(|_, _, v| finite &= v.is_finite());
        if !finite {
            return Err(Error::NonFinite("constraint matrix"));
        }
        if let Some(i) = (0..m).find(|&i| a.row_norm_sq(i) == 0.0) {
            return Err(Error::ZeroRow(i));
        }
        Ok(ProblemInstance { a, b })
    }

    pub fn from_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::new(ConstraintMatrix::from_dense(a), b)
    }

    pub fn a(&self) -> &ConstraintMatrix {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `Ax - b`.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.mul_vec(x) - &self.b
    }

    /// `||(Ax - b)^+||_2`.
    pub fn positive_residual_norm(&self, x: &DVector<f64>) -> f64 {
        positive_part(&self.residual(x)).norm()
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.residual(x).iter().all(|r| *r <= tol)
    }
}

/// Componentwise `max(v, 0)`.
pub fn positive_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| t.max(0.0))
}

#[derive(Debug, Clone)]
enum Metric {
    Identity(usize),
    Diagonal(DVector<f64>),
    Dense { matrix: DMatrix<f64>, chol: Cholesky<f64, Dyn> },
}

/// Symmetric positive definite matrix `B` defining the geometry `||x||_B^2 = x^T B x`.
#[derive(Debug, Clone)]
pub struct MetricMatrix {
    inner: Metric,
}

/// Storage class of a metric, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Identity,
    Diagonal,
    DenseSpd,
}

impl MetricMatrix {
    pub fn identity(n: usize) -> Self {
        MetricMatrix { inner: Metric::Identity(n) }
    }

    pub fn diagonal(d: DVector<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is {}", d[i])));
        }
        Ok(MetricMatrix { inner: Metric::Diagonal(d) })
    }

    pub fn dense_spd(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotPositiveDefinite(format!(
                "matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("metric matrix"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::NotPositiveDefinite(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        let chol = Cholesky::new(matrix.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
        Ok(MetricMatrix { inner: Metric::Dense { matrix, chol } })
    }

    pub fn kind(&self) -> MetricKind {
        match self.inner {
            Metric::Identity(_) => MetricKind::Identity,
            Metric::Diagonal(_) => MetricKind::Diagonal,
            Metric::Dense { .. } => MetricKind::DenseSpd,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.inner {
            Metric::Identity(n) => *n,
            Metric::Diagonal(d) => d.len(),
            Metric::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.inner, Metric::Identity(_))
    }

    /// The dense matrix, when stored densely.
    pub fn as_dense(&self) -> Option<&DMatrix<f64>> {
        match &self.inner {
            Metric::Dense { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.inner {
            Metric::Identity(n) => DMatrix::identity(*n, *n),
            Metric::Diagonal(d) => DMatrix::from_diagonal(d),
            Metric::Dense { matrix, .. } => matrix.clone(),
        }
    }

    /// `B v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Metric::Identity(_) => v.clone(),
            Metric::Diagonal(d) => d.component_mul(v),
            Metric::Dense { matrix, .. } => matrix * v,
        }
    }

    /// `B^{-1} v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Metric::Identity(_) => v.clone(),
            Metric::Diagonal(d) => v.component_div(d),
            Metric::Dense { chol, .. } => chol.solve(v),
        }
    }

    /// `L^{-1} v` where `B = L L^T`, so that `||L^{-1} v||^2 = v^T B^{-1} v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Metric::Identity(_) => v.clone(),
            Metric::Diagonal(d) => v.zip_map(d, |a, b| a / b.sqrt()),
            Metric::Dense { chol, .. } => chol.l_dirty().solve_lower_triangular(v).expect("Cholesky factor is nonsingular"),
        }
    }

    /// `L^{-T} v` where `B = L L^T`.
    pub fn whiten_t(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Metric::Identity(_) => v.clone(),
            Metric::Diagonal(d) => v.zip_map(d, |a, b| a / b.sqrt()),
            Metric::Dense { chol, .. } => {
                chol.l_dirty().tr_solve_lower_triangular(v).expect("Cholesky factor is nonsingular")
            }
        }
    }

    /// Column-wise `L^{-1} M`.
    pub fn whiten_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner {
            Metric::Identity(_) => m.clone(),
            Metric::Diagonal(d) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i].sqrt();
                }
                out
            }
            Metric::Dense { chol, .. } => {
                chol.l_dirty().solve_lower_triangular(m).expect("Cholesky factor is nonsingular")
            }
        }
    }

    /// Column-wise `B^{-1} M`.
    pub fn solve_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.inner {
            Metric::Identity(_) => m.clone(),
            Metric::Diagonal(d) => {
                let mut out = m.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row /= d[i];
                }
                out
            }
            Metric::Dense { chol, .. } => chol.solve(m),
        }
    }

    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        match &self.inner {
            Metric::Identity(_) => v.norm_squared(),
            Metric::Diagonal(d) => v.iter().zip(d.iter()).map(|(a, w)| w * a * a).sum(),
            Metric::Dense { matrix, .. } => v.dot(&(matrix * v)),
        }
    }

    /// Smallest and largest eigenvalues of `B`.
    pub fn eigen_range(&self) -> (f64, f64) {
        match &self.inner {
            Metric::Identity(_) => (1.0, 1.0),
            Metric::Diagonal(d) => (d.min(), d.max()),
            Metric::Dense { matrix, chol } => {
                let n = matrix.nrows();
                if n <= DENSE_EIGEN_LIMIT {
                    sym_eigen_extremes(matrix)
                } else {
                    let max = power_iteration(n, |v| matrix * v, 1e-10, 10_000);
                    let inv_max = power_iteration(n, |v| chol.solve(v), 1e-10, 10_000);
                    (1.0 / inv_max, max)
                }
            }
        }
    }
}

/// `||v||_B`.
pub fn b_norm(metric: &MetricMatrix, v: &DVector<f64>) -> Result<f64> {
    check_dim("vector", metric.dim(), v.len())?;
    Ok(metric.norm_sq(v).max(0.0).sqrt())
}

/// `B^{-1} v`.
pub fn apply_b_inverse(metric: &MetricMatrix, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("vector", metric.dim(), v.len())?;
    Ok(metric.solve(v))
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, found })
    }
}

/// Sketch vectors before their weights are computed.
#[derive(Debug, Clone)]
pub enum RawSketches {
    /// `S_i = e_i` for every row.
    Coordinate,
    /// Explicit nonnegative `m`-vectors.
    Vectors(Vec<DVector<f64>>),
}

#[derive(Debug, Clone)]
enum SketchKind {
    Coordinate,
    Explicit {
        // Columns are the sketch vectors S_i.
        s: DMatrix<f64>,
        // Columns are A^T S_i.
        normals: DMatrix<f64>,
        rhs: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
enum Directions {
    Solve,
    // B^{-1} A^T S_i is the i-th coordinate vector.
    Unit,
    Cached(DMatrix<f64>),
}

/// A finite set of nonnegative sketch vectors together with `omega_i = ||A^T S_i||^2_{B^{-1}}`.
#[derive(Debug, Clone)]
pub struct SketchSet {
    kind: SketchKind,
    directions: Directions,
    omega: Vec<f64>,
    m: usize,
    n: usize,
}

impl SketchSet {
    /// Coordinate sketches `S_i = e_i`.
    pub fn coordinate(problem: &ProblemInstance, metric: &MetricMatrix) -> Result<Self> {
        precompute_sketch_norms(problem, metric, &RawSketches::Coordinate)
    }

    /// Explicit sketch vectors.
    pub fn explicit(problem: &ProblemInstance, metric: &MetricMatrix, vectors: Vec<DVector<f64>>) -> Result<Self> {
        precompute_sketch_norms(problem, metric, &RawSketches::Vectors(vectors))
    }

    /// Coordinate sketches for a metric equal to the (square, SPD) constraint matrix.
    ///
    /// Here `B^{-1} a_i = e_i` and `omega_i = A_ii`, so no solves are needed.
    pub fn coordinate_unit(problem: &ProblemInstance, metric: &MetricMatrix) -> Result<Self> {
        let b = metric
            .as_dense()
            .ok_or_else(|| Error::Precondition("unit directions need a dense metric equal to A".into()))?;
        let a = problem.a().to_dense();
        if a.shape() != b.shape() || a != *b {
            return Err(Error::Precondition("metric must equal the constraint matrix".into()));
        }
        let omega: Vec<f64> = (0..problem.m()).map(|i| a[(i, i)]).collect();
        if let Some(i) = omega.iter().position(|w| !(*w > 0.0)) {
            return Err(Error::DegenerateSketch(i));
        }
        Ok(SketchSet {
            kind: SketchKind::Coordinate,
            directions: Directions::Unit,
            omega,
            m: problem.m(),
            n: problem.n(),
        })
    }

    pub fn q(&self) -> usize {
        self.omega.len()
    }

    pub fn is_coordinate(&self) -> bool {
        matches!(self.kind, SketchKind::Coordinate)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn omega_min(&self) -> f64 {
        self.omega.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn omega_max(&self) -> f64 {
        self.omega.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The sketch vector `S_i` as an `m`-vector.
    pub fn vector(&self, i: usize) -> DVector<f64> {
        match &self.kind {
            SketchKind::Coordinate => {
                let mut e = DVector::zeros(self.m);
                e[i] = 1.0;
                e
            }
            SketchKind::Explicit { s, .. } => s.column(i).into_owned(),
        }
    }

    /// The matrix whose columns are the sketch vectors (`m x q`).
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.kind {
            SketchKind::Coordinate => DMatrix::identity(self.m, self.m),
            SketchKind::Explicit { s, .. } => s.clone(),
        }
    }
}

/// Computes `omega_i` for every sketch and validates nonnegativity.
pub fn precompute_sketch_norms(
    problem: &ProblemInstance,
    metric: &MetricMatrix,
    raw: &RawSketches,
) -> Result<SketchSet> {
    let (m, n) = (problem.m(), problem.n());
    check_dim("metric", n, metric.dim())?;
    let (kind, normals) = match raw {
        RawSketches::Coordinate => (SketchKind::Coordinate, None),
        RawSketches::Vectors(vs) => {
            if vs.is_empty() {
                return Err(Error::InvalidParameter("empty sketch set".into()));
            }
            let mut s = DMatrix::zeros(m, vs.len());
            for (k, v) in vs.iter().enumerate() {
                check_dim("sketch vector", m, v.len())?;
                if let Some(j) = v.iter().position(|t| !(*t >= 0.0)) {
                    return Err(Error::NegativeSketch { sketch: k, entry: j });
                }
                s.set_column(k, v);
            }
            let mut normals = DMatrix::zeros(n, vs.len());
            for (k, v) in vs.iter().enumerate() {
                normals.set_column(k, &problem.a().tr_mul_vec(v));
            }
            let rhs = s.tr_mul(problem.b());
            (SketchKind::Explicit { s, normals: normals.clone(), rhs }, Some(normals))
        }
    };
    let q = normals.as_ref().map_or(m, |w| w.ncols());

    let mut omega = Vec::with_capacity(q);
    let chunk = 256;
    let mut start = 0;
    while start < q {
        let end = (start + chunk).min(q);
        let block = match &normals {
            Some(w) => w.columns(start, end - start).into_owned(),
            None => DMatrix::from_fn(n, end - start, |r, c| problem.a().get(start + c, r)),
        };
        let white = if metric.is_identity() { block } else { metric.whiten_columns(&block) };
        omega.extend(white.column_iter().map(|c| c.norm_squared()));
        start = end;
    }
    if let Some(i) = omega.iter().position(|w| !(*w > 0.0)) {
        return Err(Error::DegenerateSketch(i));
    }

    let directions = match metric.kind() {
        MetricKind::DenseSpd if n * q <= DIRECTION_CACHE_LIMIT => {
            let block = match &normals {
                Some(w) => w.clone(),
                None => problem.a().to_dense().transpose(),
            };
            Directions::Cached(metric.solve_columns(&block))
        }
        _ => Directions::Solve,
    };

    Ok(SketchSet { kind, directions, omega, m, n })
}

/// A problem together with its metric and sketches, checked for consistent dimensions.
#[derive(Debug, Clone, Copy)]
pub struct SketchedProblem<'a> {
    pub problem: &'a ProblemInstance,
    pub metric: &'a MetricMatrix,
    pub sketches: &'a SketchSet,
}

impl<'a> SketchedProblem<'a> {
    pub fn new(problem: &'a ProblemInstance, metric: &'a MetricMatrix, sketches: &'a SketchSet) -> Result<Self> {
        check_dim("metric", problem.n(), metric.dim())?;
        check_dim("sketch rows", problem.m(), sketches.m)?;
        check_dim("sketch columns", problem.n(), sketches.n)?;
        Ok(SketchedProblem { problem, metric, sketches })
    }

    pub fn q(&self) -> usize {
        self.sketches.q()
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.sketches.omega[i]
    }

    /// `S_i^T (Ax - b)`.
    pub fn sketched_residual_at(&self, x: &DVector<f64>, i: usize) -> f64 {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.a().row_dot(i, x) - self.problem.b()[i],
            SketchKind::Explicit { normals, rhs, .. } => normals.column(i).dot(x) - rhs[i],
        }
    }

    /// `S^T (Ax - b)` for all sketches.
    pub fn sketched_residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.residual(x),
            SketchKind::Explicit { normals, rhs, .. } => normals.tr_mul(x) - rhs,
        }
    }

    /// `R A y` where the rows of `R` are the sketch vectors.
    pub fn ra_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.a().mul_vec(y),
            SketchKind::Explicit { normals, .. } => normals.tr_mul(y),
        }
    }

    /// `(R A)^T z = sum_i z_i A^T S_i`.
    pub fn ra_tr_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.a().tr_mul_vec(z),
            SketchKind::Explicit { normals, .. } => normals * z,
        }
    }

    /// The `n x q` matrix with columns `A^T S_i`.
    pub fn normals_matrix(&self) -> DMatrix<f64> {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.a().to_dense().transpose(),
            SketchKind::Explicit { normals, .. } => normals.clone(),
        }
    }

    /// `A^T S_i`.
    pub fn normal(&self, i: usize) -> DVector<f64> {
        match &self.sketches.kind {
            SketchKind::Coordinate => self.problem.a().row(i),
            SketchKind::Explicit { normals, .. } => normals.column(i).into_owned(),
        }
    }

    /// `B^{-1} A^T S_i`.
    pub fn direction(&self, i: usize) -> DVector<f64> {
        let mut d = DVector::zeros(self.n());
        self.add_direction(i, 1.0, &mut d);
        d
    }

    /// `x += alpha * B^{-1} A^T S_i`.
    pub fn add_direction(&self, i: usize, alpha: f64, x: &mut DVector<f64>) {
        match (&self.sketches.directions, &self.sketches.kind) {
            (Directions::Unit, _) => x[i] += alpha,
            (Directions::Cached(w), _) => x.axpy(alpha, &w.column(i), 1.0),
            (Directions::Solve, SketchKind::Coordinate) if self.metric.is_identity() => {
                self.problem.a().axpy_row(i, alpha, x)
            }
            (Directions::Solve, SketchKind::Explicit { normals, .. }) if self.metric.is_identity() => {
                x.axpy(alpha, &normals.column(i), 1.0)
            }
            (Directions::Solve, _) => {
                let d = self.metric.solve(&self.normal(i));
                x.axpy(alpha, &d, 1.0);
            }
        }
    }
}
