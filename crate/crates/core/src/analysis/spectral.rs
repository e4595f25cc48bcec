use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, sym_eigenvalues, ConstraintMatrix, DENSE_EIGEN_LIMIT};
use crate::model::{MetricMatrix, ProblemInstance, SketchedProblem};
use crate::projection::{exact_projection, MAX_PROJECTION_ROWS};
use crate::sampling::{RngState, SamplingRule};

/// Largest dimension accepted by [`hoffman_bruteforce`].
pub const BRUTEFORCE_MAX_COLS: usize = 6;

/// Default number of sample points for [`hoffman_bruteforce`].
pub const BRUTEFORCE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub mu1: f64,
    pub mu2: f64,
    pub hoffman_sigma: f64,
    pub omega1: f64,
    pub omega2: f64,
}

/// `1 / lambda_min^+(A^T A)`, the squared error-bound constant of a consistent system.
pub fn hoffman_consistent(a: &ConstraintMatrix) -> Result<f64> {
    let dense = a.to_dense();
    let gram = dense.tr_mul(&dense);
    smallest_positive_inverse(&gram)
}

fn smallest_positive_inverse(gram: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigenvalues(gram);
    let max = eig.last().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Err(Error::InvalidParameter("matrix is zero".into()));
    }
    let cutoff = max * gram.nrows() as f64 * f64::EPSILON * 16.0;
    let min_pos = eig.into_iter().find(|v| *v > cutoff).unwrap_or(max);
    Ok(1.0 / min_pos)
}

/// `1 / lambda_min^+(L^{-1} A^T A L^{-T})` for `B = L L^T`, the consistent-case constant in the `B` geometry.
pub fn hoffman_consistent_metric(problem: &ProblemInstance, metric: &MetricMatrix) -> Result<f64> {
    let at = problem.a().to_dense().transpose();
    let g = metric.whiten_columns(&at);
    smallest_positive_inverse(&(&g * g.transpose()))
}

/// Certified upper bound on `sup d_B(x, X)^2 / ||(Ax - b)^+||^2` for small systems.
///
/// Maximizes `1 / lambda_min(A_J B^{-1} A_J^T)` over all sets `J` of linearly independent rows.
pub fn hoffman_upper_bound(problem: &ProblemInstance, metric: &MetricMatrix) -> Result<f64> {
    let (m, n) = (problem.m(), problem.n());
    if m > MAX_PROJECTION_ROWS {
        return Err(Error::TooLarge { what: "row count for the Hoffman bound", limit: MAX_PROJECTION_ROWS, found: m });
    }
    let a = problem.a().to_dense();
    let w = metric.solve_columns(&a.transpose());
    let gram = &a * &w;
    let scale = gram.diagonal().max();
    let mut best: f64 = 0.0;
    let mut subset: Vec<usize> = Vec::new();
    for size in 1..=m.min(n) {
        subset.clear();
        subset.extend(0..size);
        loop {
            let g = DMatrix::from_fn(size, size, |r, c| gram[(subset[r], subset[c])]);
            let lmin = sym_eigenvalues(&g)[0];
            if lmin > 1e-10 * scale {
                best = best.max(1.0 / lmin);
            }
            if !advance(&mut subset, m) {
                break;
            }
        }
    }
    Ok(best)
}

fn advance(c: &mut [usize], m: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
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

/// Sampled lower estimate of `sup d_B(x, X)^2 / ||[R(Ax - b)]^+||^2`.
///
/// Points are `y + r u` with `y` feasible, `u` uniform on the sphere and `r` log-uniform
/// in `[1e-2, 1e3]`. Distances come from the exact projection.
pub fn hoffman_bruteforce(sys: &SketchedProblem<'_>, samples: usize, seed: u64) -> Result<f64> {
    let (m, n) = (sys.problem.m(), sys.problem.n());
    if m > MAX_PROJECTION_ROWS {
        return Err(Error::TooLarge { what: "row count for the sampled Hoffman estimate", limit: MAX_PROJECTION_ROWS, found: m });
    }
    if n > BRUTEFORCE_MAX_COLS {
        return Err(Error::TooLarge { what: "column count for the sampled Hoffman estimate", limit: BRUTEFORCE_MAX_COLS, found: n });
    }
    let anchor = exact_projection(sys.problem, sys.metric, &DVector::zeros(n))?;
    let mut rng = RngState::new(seed);
    let rng = rng.rng();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let mut u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = u.norm();
        if norm == 0.0 {
            continue;
        }
        u /= norm;
        let r = 10f64.powf(rng.random_range(-2.0..3.0));
        let x = &anchor + u * r;
        let res = sys.sketched_residuals(&x).map(|t| t.max(0.0)).norm_squared();
        if res == 0.0 {
            continue;
        }
        let y = exact_projection(sys.problem, sys.metric, &x)?;
        best = best.max(sys.metric.norm_sq(&(x - y)) / res);
    }
    Ok(best)
}

/// `lambda_max(L^{-1} (RA)^T W (RA) L^{-T})` with `W = diag(weights)`, `B = L L^T`.
fn weighted_operator_lambda_max(sys: &SketchedProblem<'_>, weights: &[f64]) -> f64 {
    let (n, q) = (sys.n(), sys.q());
    if n.min(q) <= DENSE_EIGEN_LIMIT && n * q <= 16_000_000 {
        let mut g = sys.metric.whiten_columns(&sys.normals_matrix());
        for (j, mut col) in g.column_iter_mut().enumerate() {
            col *= weights[j].sqrt();
        }
        let gram = if n <= q { &g * g.transpose() } else { g.tr_mul(&g) };
        sym_eigenvalues(&gram).last().copied().unwrap_or(0.0)
    } else {
        let w = DVector::from_row_slice(weights);
        power_iteration(
            n,
            |v| {
                let y = sys.metric.whiten_t(v);
                let z = sys.ra_mul(&y).component_mul(&w);
                sys.metric.whiten(&sys.ra_tr_mul(&z))
            },
            1e-10,
            10_000,
        )
    }
}

/// `lambda_max(B^{-1/2} A^T R^T R A B^{-1/2})`.
pub fn sketch_operator_norm(sys: &SketchedProblem<'_>) -> f64 {
    weighted_operator_lambda_max(sys, &vec![1.0; sys.q()])
}

/// `lambda_max(B^{-1/2} A^T Z A B^{-1/2})` with `Z = sum_i p_i S_i S_i^T / omega_i`.
pub fn mu2_operator(sys: &SketchedProblem<'_>, probabilities: &[f64]) -> Result<f64> {
    if probabilities.len() != sys.q() {
        return Err(Error::Dimension { what: "probability vector", expected: sys.q(), found: probabilities.len() });
    }
    if probabilities.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter("probabilities must be nonnegative".into()));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("probabilities sum to {total}, not 1")));
    }
    let omega = sys.sketches.omega();
    let w: Vec<f64> = probabilities.iter().zip(omega).map(|(p, o)| p / o).collect();
    Ok(weighted_operator_lambda_max(sys, &w))
}

/// Constants for the greedy rule with sample size `tau`.
///
/// Without `zero_count`, the worst case `s = 0` gives `mu1 = 1 / (q sigma omega_max)`.
pub fn mu_bounds_greedy(
    sys: &SketchedProblem<'_>,
    tau: usize,
    sigma_hoffman: f64,
    zero_count: Option<usize>,
) -> Result<SpectralConstants> {
    let q = sys.q();
    if tau == 0 || tau > q {
        return Err(Error::InvalidParameter(format!("tau = {tau} must lie in 1..={q}")));
    }
    let norm = sketch_operator_norm(sys);
    mu_bounds_greedy_with_norm(sys, tau, sigma_hoffman, zero_count, norm)
}

fn mu_bounds_greedy_with_norm(
    sys: &SketchedProblem<'_>,
    tau: usize,
    sigma_hoffman: f64,
    zero_count: Option<usize>,
    operator_norm: f64,
) -> Result<SpectralConstants> {
    if !(sigma_hoffman > 0.0) {
        return Err(Error::InvalidParameter("Hoffman constant must be positive".into()));
    }
    let q = sys.q();
    let (omega1, omega2) = (sys.sketches.omega_min(), sys.sketches.omega_max());
    let s = zero_count.unwrap_or(0).min(q - 1);
    let inner = (1.0 / (q - tau + 1) as f64).min(1.0 / (q - s) as f64);
    let mu1 = inner / (sigma_hoffman * omega2);
    let mu2 = (tau as f64 / (omega1 * q as f64) * operator_norm).min(1.0);
    Ok(SpectralConstants { mu1, mu2, hoffman_sigma: sigma_hoffman, omega1, omega2 })
}

/// Capped-rule constants: `mu1` mixes the two greedy values, `mu2` is the greedy value at `tau = q`.
pub fn mu_bounds_capped(
    theta: f64,
    tau1: usize,
    tau2: usize,
    q: usize,
    mut constants: impl FnMut(usize) -> Result<SpectralConstants>,
) -> Result<SpectralConstants> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must lie in [0, 1]")));
    }
    let c1 = constants(tau1)?;
    let c2 = constants(tau2)?;
    let cq = constants(q)?;
    Ok(SpectralConstants { mu1: theta * c1.mu1 + (1.0 - theta) * c2.mu1, mu2: cq.mu2, ..cq })
}

/// Constants matching a sampling rule.
///
/// Uniform sampling also takes the tighter operator form of `mu2`.
pub fn mu_bounds_for_rule(sys: &SketchedProblem<'_>, rule: &SamplingRule, sigma_hoffman: f64) -> Result<SpectralConstants> {
    let q = sys.q();
    let norm = sketch_operator_norm(sys);
    let greedy = |tau: usize| mu_bounds_greedy_with_norm(sys, tau, sigma_hoffman, None, norm);
    match *rule {
        SamplingRule::Uniform { weighted: false } => {
            let mut c = greedy(1)?;
            c.mu2 = c.mu2.min(mu2_operator(sys, &vec![1.0 / q as f64; q])?);
            Ok(c)
        }
        SamplingRule::Uniform { weighted: true } => {
            let total: f64 = sys.sketches.omega().iter().sum();
            let p: Vec<f64> = sys.sketches.omega().iter().map(|w| w / total).collect();
            let mut c = greedy(1)?;
            c.mu1 = 1.0 / (sigma_hoffman * total);
            c.mu2 = mu2_operator(sys, &p)?.min(1.0);
            Ok(c)
        }
        SamplingRule::MaxDistance => greedy(q),
        SamplingRule::Greedy { tau } => greedy(tau),
        SamplingRule::Capped { theta, tau1, tau2, .. } => mu_bounds_capped(theta, tau1, tau2, q, greedy),
    }
}
