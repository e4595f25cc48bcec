//! Sketched losses `f_i(x) = ([S_i^T (Ax - b)]^+)^2 / (2 omega_i)` and their gradients.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{check_dim, positive_part, SketchedProblem};

/// Positive parts of the sketched residuals `[S^T (Ax - b)]^+`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchedResidual {
    pub values: DVector<f64>,
    /// Number of strictly positive entries.
    pub nonzero_count: usize,
}

#[inline]
pub(crate) fn loss_from_residual(r: f64, omega: f64) -> f64 {
    let p = r.max(0.0);
    p * p / (2.0 * omega)
}

fn check(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: Option<usize>) -> Result<()> {
    check_dim("point", sys.n(), x.len())?;
    if let Some(i) = i {
        if i >= sys.q() {
            return Err(Error::IndexOutOfRange { index: i, len: sys.q() });
        }
    }
    Ok(())
}

pub fn loss_i(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize) -> Result<f64> {
    check(sys, x, Some(i))?;
    Ok(loss_from_residual(sys.sketched_residual_at(x, i), sys.omega(i)))
}

/// All `q` losses at `x`.
pub fn losses(sys: &SketchedProblem<'_>, x: &DVector<f64>) -> Result<Vec<f64>> {
    check(sys, x, None)?;
    let r = sys.sketched_residuals(x);
    let omega = sys.sketches.omega();
    Ok(r.iter().zip(omega).map(|(ri, w)| loss_from_residual(*ri, *w)).collect())
}

/// Gradient of `f_i` in the `B` inner product: `([S_i^T (Ax-b)]^+ / omega_i) B^{-1} A^T S_i`.
pub fn grad_b_loss_i(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    check(sys, x, Some(i))?;
    let coeff = sys.sketched_residual_at(x, i).max(0.0) / sys.omega(i);
    let mut g = DVector::zeros(sys.n());
    if coeff != 0.0 {
        sys.add_direction(i, coeff, &mut g);
    }
    Ok(g)
}

/// Euclidean gradient `([S_i^T (Ax-b)]^+ / omega_i) A^T S_i`.
pub fn grad_loss_i(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    check(sys, x, Some(i))?;
    let coeff = sys.sketched_residual_at(x, i).max(0.0) / sys.omega(i);
    Ok(sys.normal(i) * coeff)
}

pub fn sketched_residual(sys: &SketchedProblem<'_>, x: &DVector<f64>) -> Result<SketchedResidual> {
    check(sys, x, None)?;
    let values = positive_part(&sys.sketched_residuals(x));
    let nonzero_count = values.iter().filter(|v| **v > 0.0).count();
    Ok(SketchedResidual { values, nonzero_count })
}

/// Weight of each ascending-sorted loss position in the greedy expectation.
///
/// Position `p` carries `C(p, tau-1) / C(q, tau)`, which is the probability that the maximum
/// of a uniformly random `tau`-subset sits at position `p`.
pub fn greedy_weights(q: usize, tau: usize) -> Result<Vec<f64>> {
    if tau == 0 || tau > q {
        return Err(Error::InvalidParameter(format!("tau = {tau} must lie in 1..={q}")));
    }
    let mut w = vec![0.0; q];
    w[q - 1] = tau as f64 / q as f64;
    for p in (tau..q).rev() {
        w[p - 1] = w[p] * (p + 1 - tau) as f64 / p as f64;
    }
    Ok(w)
}

/// Expectation of the greedy sample-max over `tau`-subsets given precomputed losses.
pub fn expected_greedy_from_losses(losses: &[f64], tau: usize) -> Result<f64> {
    let w = greedy_weights(losses.len(), tau)?;
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(sorted.iter().zip(&w).map(|(l, p)| l * p).sum())
}

pub fn expected_loss_greedy(sys: &SketchedProblem<'_>, x: &DVector<f64>, tau: usize) -> Result<f64> {
    expected_greedy_from_losses(&losses(sys, x)?, tau)
}

/// `||[S^T (Ax - b)]^+||^2 / (2 omega_max q)`, a lower bound on every greedy expectation.
pub fn expected_loss_lower_bound(sys: &SketchedProblem<'_>, x: &DVector<f64>) -> Result<f64> {
    let r = sketched_residual(sys, x)?;
    Ok(r.values.norm_squared() / (2.0 * sys.sketches.omega_max() * sys.q() as f64))
}
