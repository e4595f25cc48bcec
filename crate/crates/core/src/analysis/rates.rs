use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 2)")))
    }
}

fn check_mu(mu1: f64, mu2: f64) -> Result<()> {
    if mu1 > 0.0 && mu1 <= 1.0 && mu2 > 0.0 && mu2 <= 1.0 + 1e-9 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("spectral constants mu1 = {mu1}, mu2 = {mu2} must lie in (0, 1]")))
    }
}

/// `h = 1 - (2 delta - delta^2) mu1`.
pub fn rate_basic(delta: f64, mu1: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(mu1 > 0.0 && mu1 <= 1.0) {
        return Err(Error::InvalidParameter(format!("mu1 = {mu1} must lie in (0, 1]")));
    }
    Ok(1.0 - (2.0 * delta - delta * delta) * mu1)
}

// 1 - sqrt(h) without cancellation.
fn one_minus_sqrt_h(delta: f64, mu1: f64) -> f64 {
    let eta = 2.0 * delta - delta * delta;
    let h = (1.0 - eta * mu1).max(0.0);
    eta * mu1 / (1.0 + h.sqrt())
}

/// Largest admissible momentum for `delta`: `(1 - sqrt h) / (1 - sqrt h + delta sqrt mu2)`.
pub fn momentum_gamma_max(delta: f64, mu1: f64, mu2: f64) -> Result<f64> {
    check_delta(delta)?;
    check_mu(mu1, mu2)?;
    let c = one_minus_sqrt_h(delta, mu1);
    Ok(c / (c + delta * mu2.sqrt()))
}

/// Closed-form companions of [`momentum_gamma_max`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    /// Exact boundary at this `delta`.
    pub boundary: f64,
    /// Supremum over `delta`, attained as `delta -> 0`: `mu1 / (mu1 + sqrt mu2)`.
    pub supremum: f64,
    /// Piecewise linear bound in `delta`.
    pub piecewise: f64,
    /// `0.5 * mu1 / (mu1 + sqrt mu2) * (2 - delta)`; any smaller `gamma` is admissible.
    pub safe: f64,
}

pub fn momentum_gamma_bounds(delta: f64, mu1: f64, mu2: f64) -> Result<GammaBounds> {
    let boundary = momentum_gamma_max(delta, mu1, mu2)?;
    let t1 = mu1 / (mu1 + mu2.sqrt());
    let c = 1.0 - (1.0 - mu1).max(0.0).sqrt();
    let t2 = c / (c + mu2.sqrt());
    let piecewise = if delta <= 1.0 { t1 - (t1 - t2) * delta } else { 2.0 * t2 - t2 * delta };
    Ok(GammaBounds { boundary, supremum: t1, piecewise, safe: 0.5 * t1 * (2.0 - delta) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumRateL1 {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub rho1: f64,
    pub rho2: f64,
}

/// Rates of the coupled recursion with matrix `[[sqrt h, gamma], [delta sqrt mu2, gamma]]`.
pub fn momentum_rate_l1(delta: f64, gamma: f64, mu1: f64, mu2: f64) -> Result<MomentumRateL1> {
    let m = region_check(delta, gamma, None, mu1, mu2);
    if !m.q {
        return Err(Error::RegionViolation { region: "Q", inequality: m.violated.join("; ") });
    }
    let h = rate_basic(delta, mu1)?.max(0.0);
    let (p1, p2, p3, p4) = (h.sqrt(), gamma, delta * mu2.sqrt(), gamma);
    let d = ((p1 - p4).powi(2) + 4.0 * p2 * p3).sqrt();
    let (gamma1, gamma2, gamma3) = if p3 > 0.0 && d > 0.0 {
        ((p1 - p4 + d) / (2.0 * p3), (p1 - p4 - d) / (2.0 * p3), p3 / d)
    } else {
        (f64::INFINITY, f64::NEG_INFINITY, 0.0)
    };
    Ok(MomentumRateL1 { gamma1, gamma2, gamma3, rho1: (p1 + p4 - d) / 2.0, rho2: (p1 + p4 + d) / 2.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumRateL2 {
    pub alpha: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

/// Rate of the `(delta, gamma, zeta)` Lyapunov recursion, after checking `R` and `S`.
pub fn momentum_rate_l2(delta: f64, gamma: f64, zeta: f64, mu1: f64, mu2: f64) -> Result<MomentumRateL2> {
    let m = region_check(delta, gamma, Some(zeta), mu1, mu2);
    if m.r != Some(true) {
        return Err(Error::RegionViolation { region: "R", inequality: m.violated.join("; ") });
    }
    if m.s != Some(true) {
        return Err(Error::RegionViolation { region: "S", inequality: m.violated.join("; ") });
    }
    Ok(momentum_rate_l2_unchecked(delta, gamma, zeta, mu1, mu2))
}

/// The closed forms of [`momentum_rate_l2`] without the region check.
pub fn momentum_rate_l2_unchecked(delta: f64, gamma: f64, zeta: f64, mu1: f64, mu2: f64) -> MomentumRateL2 {
    let beta1 = 1.0 + gamma + delta * mu1 * ((1.0 + zeta) * (delta - gamma) - 2.0);
    let beta2 = gamma * (delta * (1.0 + zeta) * mu2 - 1.0);
    let beta3 = zeta * gamma * gamma + gamma * gamma + gamma;
    let ratio = if beta3 == 0.0 { 0.0 } else { beta3 / zeta };
    let (alpha, rho) = if delta * mu2 * (1.0 + zeta) <= 1.0 {
        ((ratio - beta1 - beta2).max(0.0), (beta1 + beta2).max(ratio))
    } else {
        let root = (beta1 * beta1 + 4.0 * beta2).sqrt();
        (
            0f64.max(ratio - beta1).max((-beta1 + root) / 2.0),
            ratio.max((beta1 + root) / 2.0),
        )
    };
    MomentumRateL2 { alpha, rho, beta1, beta2, beta3 }
}

/// Membership of `(delta, gamma[, zeta])` in the parameter regions `Q`, `R` and `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMembership {
    pub q: bool,
    pub r: Option<bool>,
    pub s: Option<bool>,
    /// Each violated inequality, prefixed with its region.
    pub violated: Vec<String>,
}

/// Evaluates each defining inequality literally.
///
/// `Q`: `0 < delta < 2`, `0 <= gamma < (1 - sqrt h) / (1 - sqrt h + delta sqrt mu2)`.
/// `R`: `0 < delta < 2`, `zeta >= 0`, `0 <= gamma < zeta / (1 + zeta)`.
/// `S`: `gamma mu2 / mu1 < 2 / (1 + zeta) - delta + gamma <= (1 + gamma) / (delta mu1 (1 + zeta))`.
pub fn region_check(delta: f64, gamma: f64, zeta: Option<f64>, mu1: f64, mu2: f64) -> RegionMembership {
    let mut violated = Vec::new();
    let mut ok = |cond: bool, what: String| {
        if !cond {
            violated.push(what);
        }
        cond
    };
    let delta_ok = delta > 0.0 && delta < 2.0;
    let mut q = ok(delta_ok, format!("Q: 0 < delta < 2 (delta = {delta})"));
    q &= ok(gamma >= 0.0, format!("Q: gamma >= 0 (gamma = {gamma})"));
    if delta_ok && q {
        let c = one_minus_sqrt_h(delta, mu1.clamp(0.0, 1.0));
        let bound = c / (c + delta * mu2.max(0.0).sqrt());
        q &= ok(gamma < bound, format!("Q: gamma < (1 - sqrt h) / (1 - sqrt h + delta sqrt mu2) = {bound}"));
    }

    let (r, s) = match zeta {
        None => (None, None),
        Some(zeta) => {
            let mut r = ok(delta_ok, format!("R: 0 < delta < 2 (delta = {delta})"));
            r &= ok(zeta >= 0.0, format!("R: zeta >= 0 (zeta = {zeta})"));
            r &= ok(gamma >= 0.0, format!("R: gamma >= 0 (gamma = {gamma})"));
            let cap = zeta / (1.0 + zeta);
            r &= ok(gamma < cap, format!("R: gamma < zeta / (1 + zeta) = {cap}"));
            let mid = 2.0 / (1.0 + zeta) - delta + gamma;
            let low = gamma * mu2 / mu1;
            let high = (1.0 + gamma) / (delta * mu1 * (1.0 + zeta));
            let mut s = ok(low < mid, format!("S: gamma mu2 / mu1 = {low} < 2 / (1 + zeta) - delta + gamma = {mid}"));
            s &= ok(mid <= high, format!("S: 2 / (1 + zeta) - delta + gamma = {mid} <= (1 + gamma) / (delta mu1 (1 + zeta)) = {high}"));
            (Some(r), Some(s))
        }
    };
    RegionMembership { q, r, s, violated }
}

/// Bound on the expected loss at the Cesaro average of `k` iterates:
/// `((1 - gamma)^2 d0^2 + 2 delta gamma f0) / (2 delta k (2 - 2 gamma - delta))`.
pub fn cesaro_bound(delta: f64, gamma: f64, k: usize, d0_sq: f64, f0: f64) -> Result<f64> {
    if !(gamma >= 0.0 && delta > 0.0 && delta < 2.0 * (1.0 - gamma)) {
        return Err(Error::RegionViolation {
            region: "Cesaro",
            inequality: format!("0 < delta < 2 (1 - gamma) with delta = {delta}, gamma = {gamma}"),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let num = (1.0 - gamma).powi(2) * d0_sq + 2.0 * delta * gamma * f0;
    Ok(num / (2.0 * delta * k as f64 * (2.0 - 2.0 * gamma - delta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn basic_rate_examples() {
        assert_eq!(rate_basic(1.0, 0.5).unwrap(), 0.5);
        assert_eq!(rate_basic(1.0, 1.0).unwrap(), 0.0);
        assert!(rate_basic(1e-9, 0.5).unwrap() > 1.0 - 1e-8);
        assert!(rate_basic(2.0, 0.5).is_err());
    }

    #[test]
    fn gamma_max_examples() {
        let g = momentum_gamma_max(1.0, 0.5, 0.5).unwrap();
        let s = 0.5f64.sqrt();
        assert_relative_eq!(g, (1.0 - s) / (1.0 - s + s), epsilon = 1e-15);
        let tiny = momentum_gamma_max(1e-9, 1.0, 1.0).unwrap();
        assert_relative_eq!(tiny, 0.5, epsilon = 1e-8);
        let b = momentum_gamma_bounds(1.0, 0.5, 0.5).unwrap();
        assert_relative_eq!(b.supremum, 0.5 / (0.5 + s), epsilon = 1e-15);
        assert_relative_eq!(b.piecewise, g, epsilon = 1e-15);
    }

    #[test]
    fn l1_rate_without_momentum_is_sqrt_h() {
        let r = momentum_rate_l1(1.0, 0.0, 0.5, 0.5).unwrap();
        assert_relative_eq!(r.rho2, 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(momentum_rate_l1(1.0, 0.45, 0.5, 0.5), Err(Error::RegionViolation { region: "Q", .. })));
    }

    #[test]
    fn l2_rate_without_momentum() {
        let r = momentum_rate_l2_unchecked(1.0, 0.0, 0.0, 0.5, 0.5);
        assert_relative_eq!(r.rho, 0.5, epsilon = 1e-15);
        assert_eq!(r.alpha, 0.0);
        let r = momentum_rate_l2_unchecked(0.5, 0.0, 1.0, 0.4, 0.6);
        assert_relative_eq!(r.rho, 1.0 - 0.5 * 0.4 * (2.0 - 0.5 * 2.0), epsilon = 1e-15);
    }

    #[test]
    fn cesaro_examples() {
        assert_relative_eq!(cesaro_bound(1.0, 0.25, 100, 4.0, 1.0).unwrap(), 0.0275, epsilon = 1e-15);
        assert_relative_eq!(cesaro_bound(1.0, 0.0, 10, 2.0, 5.0).unwrap(), 2.0 / (2.0 * 10.0), epsilon = 1e-15);
        let a = cesaro_bound(0.7, 0.1, 10, 2.0, 1.0).unwrap();
        let b = cesaro_bound(0.7, 0.1, 20, 2.0, 1.0).unwrap();
        assert_relative_eq!(a, 2.0 * b, epsilon = 1e-15);
        assert!(cesaro_bound(1.6, 0.25, 10, 1.0, 1.0).is_err());
    }
}
