//! Closed-form convergence quantities: spectral constants, rates, admissible momentum
//! parameters, Cesaro bounds and feasibility certificates.

mod certificate;
mod rates;
mod spectral;

pub use certificate::{
    certificate_inputs, certificate_report, max_violation, sigma_encoding, CertificateInputs, CertificateRates,
    CertificateReport,
};
pub use rates::{
    cesaro_bound, momentum_gamma_bounds, momentum_gamma_max, momentum_rate_l1, momentum_rate_l2,
    momentum_rate_l2_unchecked, rate_basic, region_check, GammaBounds, MomentumRateL1, MomentumRateL2,
    RegionMembership,
};
pub use spectral::{
    hoffman_bruteforce, hoffman_consistent, hoffman_consistent_metric, hoffman_upper_bound, mu2_operator,
    mu_bounds_capped, mu_bounds_for_rule, mu_bounds_greedy, sketch_operator_norm, SpectralConstants,
    BRUTEFORCE_MAX_COLS, BRUTEFORCE_SAMPLES,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::SketchedProblem;
use crate::projection::MAX_PROJECTION_ROWS;
use crate::sampling::SamplingRule;

/// Where the Hoffman constant in a report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoffmanSource {
    Supplied,
    /// Maximum over independent row subsets; exact upper bound for small systems.
    SubsetBound,
    /// Smallest positive eigenvalue formula of the consistent case.
    ConsistentCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub delta: f64,
    pub gamma: f64,
    pub zeta: Option<f64>,
    pub hoffman: Option<f64>,
    /// Iteration count for the certificate bound; defaults to the iteration lower bound.
    pub k: Option<usize>,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams { delta: 1.0, gamma: 0.0, zeta: None, hoffman: None, k: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub rule: String,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub delta: f64,
    pub gamma: f64,
    pub zeta: Option<f64>,
    pub hoffman_sigma: f64,
    pub hoffman_source: HoffmanSource,
    pub omega1: f64,
    pub omega2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub h: f64,
    pub gamma_max: f64,
    pub gamma_sup: f64,
    pub gamma_safe: f64,
    pub in_q: bool,
    pub in_r: Option<bool>,
    pub in_s: Option<bool>,
    pub violated: Vec<String>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub sigma_enc: f64,
    pub psi: f64,
    pub xi: f64,
    pub certificate: Option<CertificateReport>,
}

/// Evaluates every closed-form quantity for a method and parameter choice.
///
/// The certificate fields are evaluated at the origin, the starting point the bound assumes.
pub fn analyze(sys: &SketchedProblem<'_>, rule: &SamplingRule, params: &AnalysisParams) -> Result<AnalysisReport> {
    let (hoffman_sigma, hoffman_source) = match params.hoffman {
        Some(h) => (h, HoffmanSource::Supplied),
        None if sys.problem.m() <= MAX_PROJECTION_ROWS && sys.sketches.is_coordinate() => {
            (hoffman_upper_bound(sys.problem, sys.metric)?, HoffmanSource::SubsetBound)
        }
        None => (hoffman_consistent_metric(sys.problem, sys.metric)?, HoffmanSource::ConsistentCase),
    };
    let c = mu_bounds_for_rule(sys, rule, hoffman_sigma)?;
    let mu1 = c.mu1.min(1.0);
    let mu2 = c.mu2;
    let (delta, gamma) = (params.delta, params.gamma);
    let h = rate_basic(delta, mu1)?;
    let gb = momentum_gamma_bounds(delta, mu1, mu2)?;
    let membership = region_check(delta, gamma, params.zeta, mu1, mu2);

    let l1 = if membership.q { Some(momentum_rate_l1(delta, gamma, mu1, mu2)?) } else { None };
    let l2 = match params.zeta {
        Some(z) if membership.r == Some(true) && membership.s == Some(true) => {
            Some(momentum_rate_l2(delta, gamma, z, mu1, mu2)?)
        }
        _ => None,
    };
    let inputs = certificate_inputs(sys.problem, sys.metric);
    let rates = CertificateRates { rho2: l1.map(|r| r.rho2), l2: l2.map(|r| (r.alpha, r.rho)) };
    let certificate = match rates.rho_bar() {
        Some((rb, _)) if rb < 1.0 => {
            let origin = DVector::zeros(sys.n());
            let probe = certificate_report(sys.problem, &origin, 1, &rates, &inputs)?;
            let k = params.k.unwrap_or_else(|| probe.iteration_lower_bound.max(1.0).ceil() as usize);
            Some(certificate_report(sys.problem, &origin, k, &rates, &inputs)?)
        }
        _ => None,
    };

    Ok(AnalysisReport {
        rule: rule.to_string(),
        m: sys.problem.m(),
        n: sys.n(),
        q: sys.q(),
        delta,
        gamma,
        zeta: params.zeta,
        hoffman_sigma,
        hoffman_source,
        omega1: c.omega1,
        omega2: c.omega2,
        mu1,
        mu2,
        h,
        gamma_max: gb.boundary,
        gamma_sup: gb.supremum,
        gamma_safe: gb.safe,
        in_q: membership.q,
        in_r: membership.r,
        in_s: membership.s,
        violated: membership.violated,
        rho1: l1.map(|r| r.rho1),
        rho2: l1.map(|r| r.rho2),
        alpha: l2.map(|r| r.alpha),
        rho: l2.map(|r| r.rho),
        sigma_enc: inputs.sigma_enc,
        psi: inputs.psi,
        xi: inputs.xi,
        certificate,
    })
}
