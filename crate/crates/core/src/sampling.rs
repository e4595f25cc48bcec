//! Index selection rules for the sketch-and-project update.

use std::fmt;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{expected_greedy_from_losses, loss_from_residual};
use crate::model::SketchedProblem;

/// Seeded random stream. Each trial gets its own ChaCha stream of the same seed.
#[derive(Debug, Clone)]
pub struct RngState {
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn for_trial(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        RngState { rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// How the capped rule's threshold is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Convex combination of the two exact greedy expectations.
    #[default]
    Exact,
    /// The cheaper bound `||r^+||^2 / (2 omega_max q)`, which never exceeds either expectation.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SamplingRule {
    /// Uniform over sketches, or proportional to `omega_i` when `weighted`.
    Uniform {
        #[serde(default)]
        weighted: bool,
    },
    /// Largest loss, lowest index on ties.
    MaxDistance,
    /// Largest loss among `tau` indices drawn without replacement.
    Greedy { tau: usize },
    /// Uniform over indices whose loss reaches `theta E[G(tau1)] + (1 - theta) E[G(tau2)]`.
    Capped {
        theta: f64,
        tau1: usize,
        tau2: usize,
        #[serde(default)]
        threshold: ThresholdMode,
    },
}

impl SamplingRule {
    /// Parses `uniform`, `weighted`, `max`, `greedy:TAU`, or `capped:THETA:TAU1:TAU2`.
    ///
    /// Any `tau` may be written `m` or `q` to mean the number of sketches.
    pub fn parse(s: &str, q: usize) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let tau = |t: &str| -> Result<usize> {
            match t {
                "m" | "q" => Ok(q),
                _ => t.parse().map_err(|_| Error::InvalidParameter(format!("bad tau '{t}' in rule '{s}'"))),
            }
        };
        let rule = match parts.as_slice() {
            ["uniform"] => SamplingRule::Uniform { weighted: false },
            ["weighted"] | ["uniform", "weighted"] => SamplingRule::Uniform { weighted: true },
            ["max"] | ["max_distance"] | ["maxdistance"] => SamplingRule::MaxDistance,
            ["greedy", t] => SamplingRule::Greedy { tau: tau(t)? },
            ["capped", th, t1, t2] => SamplingRule::Capped {
                theta: th.parse().map_err(|_| Error::InvalidParameter(format!("bad theta in rule '{s}'")))?,
                tau1: tau(t1)?,
                tau2: tau(t2)?,
                threshold: ThresholdMode::Exact,
            },
            _ => return Err(Error::InvalidParameter(format!("unknown sampling rule '{s}'"))),
        };
        rule.validate(q)?;
        Ok(rule)
    }

    pub fn validate(&self, q: usize) -> Result<()> {
        let check_tau = |t: usize| {
            if t == 0 || t > q {
                Err(Error::InvalidParameter(format!("tau = {t} must lie in 1..={q}")))
            } else {
                Ok(())
            }
        };
        match *self {
            SamplingRule::Uniform { .. } | SamplingRule::MaxDistance => Ok(()),
            SamplingRule::Greedy { tau } => check_tau(tau),
            SamplingRule::Capped { theta, tau1, tau2, .. } => {
                if !(0.0..=1.0).contains(&theta) {
                    return Err(Error::InvalidParameter(format!("theta = {theta} must lie in [0, 1]")));
                }
                check_tau(tau1)?;
                check_tau(tau2)
            }
        }
    }
}

impl fmt::Display for SamplingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingRule::Uniform { weighted: false } => write!(f, "uniform"),
            SamplingRule::Uniform { weighted: true } => write!(f, "weighted"),
            SamplingRule::MaxDistance => write!(f, "max"),
            SamplingRule::Greedy { tau } => write!(f, "greedy:{tau}"),
            SamplingRule::Capped { theta, tau1, tau2, .. } => write!(f, "capped:{theta}:{tau1}:{tau2}"),
        }
    }
}

/// Outcome of one selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Index(usize),
    /// Every loss the rule inspected is zero and the rule saw all of them.
    AlreadyFeasible,
}

pub fn select_uniform<R: Rng + ?Sized>(q: usize, rng: &mut R) -> usize {
    rng.random_range(0..q)
}

/// Index of the largest loss, lowest index on ties.
pub fn select_max_distance(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, l) in losses.iter().enumerate() {
        if *l > losses[best] {
            best = i;
        }
    }
    best
}

fn max_or_feasible(losses: &[f64]) -> Selection {
    let i = select_max_distance(losses);
    if losses[i] > 0.0 {
        Selection::Index(i)
    } else {
        Selection::AlreadyFeasible
    }
}

/// Draws `tau` distinct indices into `buffer[..tau]` by a partial Fisher-Yates shuffle.
///
/// `buffer` must hold a permutation of `0..q`; it stays one afterwards.
pub fn draw_without_replacement<R: Rng + ?Sized>(buffer: &mut [usize], tau: usize, rng: &mut R) {
    let q = buffer.len();
    for k in 0..tau {
        let j = rng.random_range(k..q);
        buffer.swap(k, j);
    }
}

/// Greedy choice among the `tau` indices at the front of `buffer`, given a loss oracle.
pub fn select_greedy_among(candidates: &[usize], mut loss: impl FnMut(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_loss = loss(best);
    for &i in &candidates[1..] {
        let l = loss(i);
        if l > best_loss || (l == best_loss && i < best) {
            best = i;
            best_loss = l;
        }
    }
    best
}

/// Capped choice from full losses. `None` when every loss is zero.
pub fn select_capped_from_losses<R: Rng + ?Sized>(
    losses: &[f64],
    threshold: f64,
    members: &mut Vec<usize>,
    rng: &mut R,
) -> Option<usize> {
    let max = losses.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let t = threshold.min(max);
    members.clear();
    members.extend(losses.iter().enumerate().filter(|(_, l)| **l >= t).map(|(i, _)| i));
    Some(members[rng.random_range(0..members.len())])
}

/// Threshold of the capped rule in exact mode.
pub fn capped_threshold(losses: &[f64], theta: f64, tau1: usize, tau2: usize) -> Result<f64> {
    let e1 = expected_greedy_from_losses(losses, tau1)?;
    let e2 = expected_greedy_from_losses(losses, tau2)?;
    Ok(theta * e1 + (1.0 - theta) * e2)
}

/// Greedy selection: the largest loss among `tau` indices drawn without replacement.
///
/// `buffer` holds a permutation of `0..q` reused across calls.
pub fn select_greedy(
    sys: &SketchedProblem<'_>,
    x: &DVector<f64>,
    tau: usize,
    buffer: &mut [usize],
    rng: &mut RngState,
) -> Result<usize> {
    if tau == 0 || tau > sys.q() {
        return Err(Error::InvalidParameter(format!("tau = {tau} must lie in 1..={}", sys.q())));
    }
    if buffer.len() != sys.q() {
        return Err(Error::Dimension { what: "index buffer", expected: sys.q(), found: buffer.len() });
    }
    draw_without_replacement(buffer, tau, rng.rng());
    Ok(select_greedy_among(&buffer[..tau], |i| {
        loss_from_residual(sys.sketched_residual_at(x, i), sys.omega(i))
    }))
}

/// Capped selection at `x`, or [`Selection::AlreadyFeasible`] when every loss is zero.
pub fn select_capped(
    sys: &SketchedProblem<'_>,
    x: &DVector<f64>,
    theta: f64,
    tau1: usize,
    tau2: usize,
    mode: ThresholdMode,
    rng: &mut RngState,
) -> Result<Selection> {
    let rule = SamplingRule::Capped { theta, tau1, tau2, threshold: mode };
    Sampler::new(rule, sys)?.select(sys, x, rng)
}

/// Stateful selector holding the scratch buffers a rule needs.
#[derive(Debug, Clone)]
pub struct Sampler {
    rule: SamplingRule,
    q: usize,
    perm: Vec<usize>,
    losses: Vec<f64>,
    members: Vec<usize>,
    weights: Option<WeightedIndex<f64>>,
}

impl Sampler {
    pub fn new(rule: SamplingRule, sys: &SketchedProblem<'_>) -> Result<Self> {
        let q = sys.q();
        rule.validate(q)?;
        let weights = match rule {
            SamplingRule::Uniform { weighted: true } => Some(
                WeightedIndex::new(sys.sketches.omega().iter().cloned())
                    .map_err(|e| Error::InvalidParameter(format!("sketch weights: {e}")))?,
            ),
            _ => None,
        };
        Ok(Sampler {
            rule,
            q,
            perm: (0..q).collect(),
            losses: Vec::new(),
            members: Vec::new(),
            weights,
        })
    }

    pub fn rule(&self) -> SamplingRule {
        self.rule
    }

    /// Whether each selection evaluates all `q` losses.
    pub fn needs_all_losses(&self) -> bool {
        match self.rule {
            SamplingRule::Uniform { .. } => false,
            SamplingRule::Greedy { tau } => tau == self.q,
            SamplingRule::MaxDistance | SamplingRule::Capped { .. } => true,
        }
    }

    fn fill_losses(&mut self, sys: &SketchedProblem<'_>, x: &DVector<f64>) {
        let r = sys.sketched_residuals(x);
        let omega = sys.sketches.omega();
        self.losses.clear();
        self.losses.extend(r.iter().zip(omega).map(|(ri, w)| loss_from_residual(*ri, *w)));
    }

    pub fn select(&mut self, sys: &SketchedProblem<'_>, x: &DVector<f64>, rng: &mut RngState) -> Result<Selection> {
        if sys.q() != self.q {
            return Err(Error::Dimension { what: "sketch count", expected: self.q, found: sys.q() });
        }
        let rng = rng.rng();
        let sel = match self.rule {
            SamplingRule::Uniform { .. } => {
                let i = match &self.weights {
                    Some(w) => w.sample(rng),
                    None => select_uniform(self.q, rng),
                };
                Selection::Index(i)
            }
            SamplingRule::MaxDistance => {
                self.fill_losses(sys, x);
                max_or_feasible(&self.losses)
            }
            SamplingRule::Greedy { tau } if tau == self.q => {
                self.fill_losses(sys, x);
                max_or_feasible(&self.losses)
            }
            SamplingRule::Greedy { tau } => {
                draw_without_replacement(&mut self.perm, tau, rng);
                let i = select_greedy_among(&self.perm[..tau], |i| {
                    loss_from_residual(sys.sketched_residual_at(x, i), sys.omega(i))
                });
                Selection::Index(i)
            }
            SamplingRule::Capped { theta, tau1, tau2, threshold } => {
                self.fill_losses(sys, x);
                let t = match threshold {
                    ThresholdMode::Exact => capped_threshold(&self.losses, theta, tau1, tau2)?,
                    ThresholdMode::LowerBound => {
                        let r = sys.sketched_residuals(x);
                        r.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>()
                            / (2.0 * sys.sketches.omega_max() * self.q as f64)
                    }
                };
                select_capped_from_losses(&self.losses, t, &mut self.members, rng)
                    .map_or(Selection::AlreadyFeasible, Selection::Index)
            }
        };
        Ok(sel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MetricMatrix, ProblemInstance, SketchSet};
    use nalgebra::DMatrix;

    fn identity_system(b: &[f64]) -> (ProblemInstance, MetricMatrix) {
        let n = b.len();
        let p = ProblemInstance::from_dense(DMatrix::identity(n, n), DVector::from_row_slice(b)).unwrap();
        (p, MetricMatrix::identity(n))
    }

    #[test]
    fn max_distance_breaks_ties_low() {
        assert_eq!(select_max_distance(&[0.5, 0.0]), 0);
        assert_eq!(select_max_distance(&[0.0, 0.0]), 0);
        assert_eq!(select_max_distance(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn parse_round_trips_display() {
        for s in ["uniform", "weighted", "max", "greedy:5", "capped:0.5:1:10"] {
            let r = SamplingRule::parse(s, 10).unwrap();
            assert_eq!(r.to_string(), s);
        }
        assert_eq!(SamplingRule::parse("greedy:m", 7).unwrap(), SamplingRule::Greedy { tau: 7 });
        assert!(SamplingRule::parse("greedy:11", 10).is_err());
        assert!(SamplingRule::parse("capped:1.5:1:2", 10).is_err());
        assert!(SamplingRule::parse("bogus", 10).is_err());
    }

    #[test]
    fn rule_json_is_tagged() {
        let r = SamplingRule::Capped { theta: 0.5, tau1: 1, tau2: 4, threshold: ThresholdMode::Exact };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"rule\":\"capped\""));
        assert_eq!(serde_json::from_str::<SamplingRule>(&s).unwrap(), r);
        let u: SamplingRule = serde_json::from_str(r#"{"rule":"uniform"}"#).unwrap();
        assert_eq!(u, SamplingRule::Uniform { weighted: false });
    }

    #[test]
    fn fisher_yates_prefix_is_distinct_and_buffer_stays_permutation() {
        let mut rng = RngState::new(3);
        let mut buf: Vec<usize> = (0..20).collect();
        for _ in 0..100 {
            draw_without_replacement(&mut buf, 7, rng.rng());
            let mut head = buf[..7].to_vec();
            head.sort();
            head.dedup();
            assert_eq!(head.len(), 7);
        }
        let mut all = buf.clone();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn capped_selects_from_set_above_threshold() {
        let losses = [0.0, 1.0, 4.0, 9.0];
        // theta = 1, tau1 = q: threshold is the max, so only index 3 qualifies.
        let t = capped_threshold(&losses, 1.0, 4, 1).unwrap();
        let mut rng = RngState::new(1);
        let mut members = Vec::new();
        for _ in 0..20 {
            assert_eq!(select_capped_from_losses(&losses, t, &mut members, rng.rng()), Some(3));
        }
        // theta = 1, tau1 = 1: threshold is the mean 3.5, so {2, 3}.
        let t = capped_threshold(&losses, 1.0, 1, 4).unwrap();
        assert_eq!(t, 3.5);
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[select_capped_from_losses(&losses, t, &mut members, rng.rng()).unwrap()] = true;
        }
        assert_eq!(seen, [false, false, true, true]);
        assert_eq!(select_capped_from_losses(&[0.0, 0.0], 0.0, &mut members, rng.rng()), None);
    }

    #[test]
    fn full_information_rules_report_feasibility() {
        let (p, b) = identity_system(&[1.0, 1.0, 1.0]);
        let s = SketchSet::coordinate(&p, &b).unwrap();
        let sys = SketchedProblem::new(&p, &b, &s).unwrap();
        let x = DVector::zeros(3);
        let mut rng = RngState::new(0);
        for rule in [
            SamplingRule::MaxDistance,
            SamplingRule::Greedy { tau: 3 },
            SamplingRule::Capped { theta: 0.5, tau1: 1, tau2: 3, threshold: ThresholdMode::Exact },
        ] {
            let mut sampler = Sampler::new(rule, &sys).unwrap();
            assert_eq!(sampler.select(&sys, &x, &mut rng).unwrap(), Selection::AlreadyFeasible);
        }
        let mut uniform = Sampler::new(SamplingRule::Uniform { weighted: false }, &sys).unwrap();
        assert!(matches!(uniform.select(&sys, &x, &mut rng).unwrap(), Selection::Index(_)));
    }

    #[test]
    fn trial_streams_differ_and_repeat() {
        let a: u64 = RngState::for_trial(9, 0).rng().random();
        let b: u64 = RngState::for_trial(9, 1).rng().random();
        let c: u64 = RngState::for_trial(9, 0).rng().random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
