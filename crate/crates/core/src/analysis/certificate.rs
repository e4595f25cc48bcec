use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MetricMatrix, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub sigma_enc: f64,
    /// Largest Euclidean row norm of `A`.
    pub psi: f64,
    /// Condition number `lambda_max(B) / lambda_min(B)`.
    pub xi: f64,
    pub n: usize,
}

/// `sum ln(|a_ij| + 1) + sum ln(|b_i| + 1) + ln(m n) + 2`.
pub fn sigma_encoding(problem: &ProblemInstance) -> f64 {
    let mut s = 0.0;
    problem.a().for_each_nonzero(|_, _, v| s += v.abs().ln_1p());
    s += problem.b().iter().map(|v| v.abs().ln_1p()).sum::<f64>();
    s + ((problem.m() * problem.n()) as f64).ln() + 2.0
}

/// `max_i (a_i^T x - b_i)^+`.
pub fn max_violation(problem: &ProblemInstance, x: &DVector<f64>) -> f64 {
    problem.residual(x).iter().fold(0.0, |acc, r| acc.max(*r))
}

pub fn certificate_inputs(problem: &ProblemInstance, metric: &MetricMatrix) -> CertificateInputs {
    let psi = (0..problem.m()).map(|i| problem.a().row_norm_sq(i)).fold(0.0, f64::max).sqrt();
    let (lo, hi) = metric.eigen_range();
    CertificateInputs { sigma_enc: sigma_encoding(problem), psi, xi: hi / lo, n: problem.n() }
}

/// Contraction factors available for the certificate bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CertificateRates {
    /// `rho2` of the first momentum analysis.
    pub rho2: Option<f64>,
    /// `(alpha, rho)` of the second momentum analysis.
    pub l2: Option<(f64, f64)>,
}

impl CertificateRates {
    /// `max(rho2^2, rho)` over the available analyses, with the matching `alpha`.
    pub fn rho_bar(&self) -> Option<(f64, f64)> {
        match (self.rho2, self.l2) {
            (None, None) => None,
            (Some(r2), None) => Some((r2 * r2, 0.0)),
            (None, Some((a, r))) => Some((r, a)),
            (Some(r2), Some((a, r))) => Some(((r2 * r2).max(r), a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub is_certificate: bool,
    pub max_violation: f64,
    /// `2^(1 - sigma_enc)`.
    pub threshold: f64,
    pub iteration_lower_bound: f64,
    /// Failure probability bound clamped to `[0, 1]`.
    pub failure_prob_bound: f64,
    /// Natural log of the unclamped failure probability bound.
    pub log_failure_prob: f64,
    pub rho_bar: f64,
    pub alpha: f64,
}

/// Checks whether `x` certifies feasibility and evaluates the iteration and probability bounds at `k`.
pub fn certificate_report(
    problem: &ProblemInstance,
    x: &DVector<f64>,
    k: usize,
    rates: &CertificateRates,
    inputs: &CertificateInputs,
) -> Result<CertificateReport> {
    let (rho_bar, alpha) = rates
        .rho_bar()
        .ok_or_else(|| Error::InvalidParameter("no contraction rate supplied".into()))?;
    if !(rho_bar >= 0.0 && rho_bar < 1.0) {
        return Err(Error::InvalidParameter(format!("rho_bar = {rho_bar} must lie in [0, 1)")));
    }
    let CertificateInputs { sigma_enc, psi, xi, n } = *inputs;
    let theta = max_violation(problem, x);
    let threshold = (1.0 - sigma_enc).exp2();
    let n = n as f64;
    let numerator = 4.0 * sigma_enc - 4.0 - n.log2() + (1.0 + alpha).log2() + xi.log2() + 2.0 * psi.log2();
    let iteration_lower_bound = numerator / (1.0 / rho_bar).log2() + 1.0;
    let log_failure_prob = 0.5 * (xi * (1.0 + alpha) / n).ln()
        + psi.ln()
        + (2.0 * sigma_enc - 2.0) * std::f64::consts::LN_2
        + (k as f64 - 1.0) / 2.0 * rho_bar.ln();
    Ok(CertificateReport {
        is_certificate: theta < threshold,
        max_violation: theta,
        threshold,
        iteration_lower_bound,
        failure_prob_bound: log_failure_prob.exp().clamp(0.0, 1.0),
        log_failure_prob,
        rho_bar,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn i2() -> ProblemInstance {
        ProblemInstance::from_dense(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap()
    }

    #[test]
    fn encoding_length_of_identity() {
        assert_relative_eq!(sigma_encoding(&i2()), 4.0 * 2f64.ln() + 2.0, epsilon = 1e-14);
        let doubled = ProblemInstance::from_dense(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2)).unwrap();
        assert!(sigma_encoding(&doubled) > sigma_encoding(&i2()));
    }

    #[test]
    fn violation_examples() {
        let p = i2();
        assert_eq!(max_violation(&p, &DVector::from_vec(vec![-1.0, 0.0])), 0.0);
        assert_eq!(max_violation(&p, &DVector::from_vec(vec![1.0, -1.0])), 1.0);
        assert_eq!(max_violation(&p, &DVector::from_vec(vec![3.0, 2.0])), 3.0);
    }

    #[test]
    fn identity_metric_reduces_xi() {
        let p = i2();
        let inp = certificate_inputs(&p, &MetricMatrix::identity(2));
        assert_eq!(inp.xi, 1.0);
        assert_eq!(inp.psi, 1.0);
        let rates = CertificateRates { rho2: Some(0.8), l2: None };
        let r = certificate_report(&p, &DVector::zeros(2), 10, &rates, &inp).unwrap();
        let expect = (1.0f64 / 2.0).sqrt() * (2.0 * inp.sigma_enc - 2.0).exp2() * 0.64f64.powf(4.5);
        assert_relative_eq!(r.log_failure_prob.exp(), expect, max_relative = 1e-12);
        assert!(r.is_certificate);
        let later = certificate_report(&p, &DVector::zeros(2), 11, &rates, &inp).unwrap();
        assert!(later.log_failure_prob < r.log_failure_prob);
        assert!(certificate_report(&p, &DVector::zeros(2), 10, &CertificateRates::default(), &inp).is_err());
    }
}
