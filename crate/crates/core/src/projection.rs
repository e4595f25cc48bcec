//! Exact `B`-projection onto a small polyhedron by active-set enumeration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{check_dim, MetricMatrix, ProblemInstance};

/// Largest row count accepted by [`exact_projection`].
pub const MAX_PROJECTION_ROWS: usize = 20;

const FEASIBILITY_TOL: f64 = 1e-9;

/// Returns `argmin { ||y - x||_B : Ay <= b }`.
///
/// Every subset of at most `min(m, n)` linearly independent rows is treated as an active set.
/// The candidate closest to `x` among the primal feasible ones is the projection.
pub fn exact_projection(problem: &ProblemInstance, metric: &MetricMatrix, x: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = (problem.m(), problem.n());
    check_dim("point", n, x.len())?;
    check_dim("metric", n, metric.dim())?;
    if m > MAX_PROJECTION_ROWS {
        return Err(Error::TooLarge { what: "row count for exact projection", limit: MAX_PROJECTION_ROWS, found: m });
    }

    let a = problem.a().to_dense();
    let b = problem.b();
    // Columns are B^{-1} a_i.
    let w = metric.solve_columns(&a.transpose());
    let gram = &a * &w;
    let slack = &a * x - b;

    let feasible = |y: &DVector<f64>| {
        let r = &a * y - b;
        r.iter().zip(b.iter()).all(|(ri, bi)| *ri <= FEASIBILITY_TOL * (1.0 + bi.abs()))
    };

    let mut best: Option<(f64, DVector<f64>)> = None;
    if feasible(x) {
        return Ok(x.clone());
    }

    let mut subset = Vec::with_capacity(n);
    for size in 1..=m.min(n) {
        first_combination(&mut subset, size);
        loop {
            let k = subset.len();
            let g = DMatrix::from_fn(k, k, |r, c| gram[(subset[r], subset[c])]);
            if let Some(chol) = g.clone().cholesky() {
                if min_pivot_ok(&chol, &g) {
                    let rhs = DVector::from_fn(k, |r, _| slack[subset[r]]);
                    let lambda = chol.solve(&rhs);
                    let mut y = x.clone();
                    for (r, &i) in subset.iter().enumerate() {
                        y.axpy(-lambda[r], &w.column(i), 1.0);
                    }
                    if feasible(&y) {
                        let d = metric.norm_sq(&(&y - x));
                        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                            best = Some((d, y));
                        }
                    }
                }
            }
            if !next_combination(&mut subset, m) {
                break;
            }
        }
    }
    best.map(|(_, y)| y).ok_or(Error::Infeasible)
}

// Rejects Gram blocks that are numerically singular (dependent rows).
fn min_pivot_ok(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, g: &DMatrix<f64>) -> bool {
    let l = chol.l_dirty();
    let scale = g.diagonal().max();
    (0..g.nrows()).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale)
}

fn first_combination(c: &mut Vec<usize>, k: usize) {
    c.clear();
    c.extend(0..k);
}

fn next_combination(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < m - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
