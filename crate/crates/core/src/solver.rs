//! Adaptive sketch-and-project iterations with heavy-ball momentum.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_dim, MetricMatrix, ProblemInstance, SketchedProblem};
use crate::sampling::{RngState, Sampler, SamplingRule, Selection};

/// Coordinate value of the default starting point.
pub const DEFAULT_START: f64 = 1000.0;

/// Row count above which the stopping residual is checked every 100 iterations by default.
const SPARSE_CHECK_ROWS: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    pub delta: f64,
    pub gamma: f64,
    pub rule: SamplingRule,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub seed: u64,
    /// Independent stream of `seed`, used to separate trials.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub track_cesaro: bool,
    /// Stride of the exact stopping check; `None` picks 1, or 100 when `m > 10^4`.
    #[serde(default)]
    pub check_every: Option<usize>,
    /// Stride of trace records. The first and last iterate are always recorded.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_log_every() -> usize {
    1
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            delta: 1.0,
            gamma: 0.0,
            rule: SamplingRule::Uniform { weighted: false },
            max_iters: 300_000,
            residual_tol: 1e-5,
            seed: 0,
            stream: 0,
            track_cesaro: false,
            check_every: None,
            log_every: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 2.0) {
            return Err(Error::InvalidParameter(format!("delta = {} must lie in (0, 2)", self.delta)));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidParameter(format!("gamma = {} must lie in [0, 1)", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidParameter("residual_tol must be positive".into()));
        }
        if self.check_every == Some(0) || self.log_every == 0 {
            return Err(Error::InvalidParameter("strides must be positive".into()));
        }
        Ok(())
    }

    fn check_stride(&self, m: usize) -> usize {
        self.check_every.unwrap_or(if m > SPARSE_CHECK_ROWS { 100 } else { 1 })
    }
}

/// `1000 * (1, ..., 1)`.
pub fn default_start(n: usize) -> DVector<f64> {
    DVector::from_element(n, DEFAULT_START)
}

/// Iterates of a momentum run. Before the first step `x_prev == x_curr`.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x_curr: DVector<f64>,
    pub x_prev: DVector<f64>,
    pub k: usize,
    pub cesaro_sum: Option<DVector<f64>>,
    pub rng: RngState,
}

impl IterateState {
    pub fn new(x0: DVector<f64>, rng: RngState, track_cesaro: bool) -> Self {
        let cesaro_sum = track_cesaro.then(|| DVector::zeros(x0.len()));
        IterateState { x_prev: x0.clone(), x_curr: x0, k: 0, cesaro_sum, rng }
    }

    /// Mean of `x_1, ..., x_k`; the current iterate before any step.
    pub fn cesaro_x(&self) -> Option<DVector<f64>> {
        self.cesaro_sum
            .as_ref()
            .map(|s| if self.k == 0 { self.x_curr.clone() } else { s / self.k as f64 })
    }
}

fn step_scale(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize, delta: f64) -> f64 {
    let r = sys.sketched_residual_at(x, i);
    if r > 0.0 {
        -delta * (r / sys.omega(i))
    } else {
        0.0
    }
}

fn check_step(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize) -> Result<()> {
    check_dim("iterate", sys.n(), x.len())?;
    if i >= sys.q() {
        return Err(Error::IndexOutOfRange { index: i, len: sys.q() });
    }
    Ok(())
}

/// `x - delta * grad_B f_i(x)`.
pub fn asp_step(sys: &SketchedProblem<'_>, x: &DVector<f64>, i: usize, delta: f64) -> Result<DVector<f64>> {
    check_step(sys, x, i)?;
    let mut next = x.clone();
    let s = step_scale(sys, x, i, delta);
    if s != 0.0 {
        sys.add_direction(i, s, &mut next);
    }
    Ok(next)
}

/// `x_{k+1} = x_k - delta * grad_B f_i(x_k) + gamma (x_k - x_{k-1})`, advancing `state`.
pub fn aspm_step(state: &mut IterateState, sys: &SketchedProblem<'_>, i: usize, delta: f64, gamma: f64) -> Result<()> {
    check_step(sys, &state.x_curr, i)?;
    advance(state, sys, i, delta, gamma);
    Ok(())
}

/// Unchecked momentum step; returns the coefficient of the direction `B^{-1} A^T S_i`.
fn advance(state: &mut IterateState, sys: &SketchedProblem<'_>, i: usize, delta: f64, gamma: f64) -> f64 {
    let s = step_scale(sys, &state.x_curr, i, delta);
    // The new iterate is built in the buffer of x_prev, then the two are swapped.
    if gamma == 0.0 {
        state.x_prev.copy_from(&state.x_curr);
    } else {
        state.x_prev.zip_apply(&state.x_curr, |p, c| *p = c + gamma * (c - *p));
    }
    if s != 0.0 {
        sys.add_direction(i, s, &mut state.x_prev);
    }
    std::mem::swap(&mut state.x_prev, &mut state.x_curr);
    state.k += 1;
    if let Some(sum) = state.cesaro_sum.as_mut() {
        *sum += &state.x_curr;
    }
    s
}

/// Result of advancing a run by one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Stepped(usize),
    AlreadyFeasible,
}

/// A momentum run that can be advanced one step at a time.
#[derive(Debug, Clone)]
pub struct AspmRun<'a> {
    sys: SketchedProblem<'a>,
    sampler: Sampler,
    state: IterateState,
    delta: f64,
    gamma: f64,
}

impl<'a> AspmRun<'a> {
    pub fn new(sys: SketchedProblem<'a>, config: &SolverConfig, x0: DVector<f64>) -> Result<Self> {
        config.validate()?;
        check_dim("starting point", sys.n(), x0.len())?;
        let sampler = Sampler::new(config.rule, &sys)?;
        let rng = RngState::for_trial(config.seed, config.stream);
        Ok(AspmRun {
            sys,
            sampler,
            state: IterateState::new(x0, rng, config.track_cesaro),
            delta: config.delta,
            gamma: config.gamma,
        })
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        Ok(match self.step_scaled()? {
            Some((i, _)) => StepOutcome::Stepped(i),
            None => StepOutcome::AlreadyFeasible,
        })
    }

    /// Selected index and direction coefficient, or `None` when the sampler found no violation.
    fn step_scaled(&mut self) -> Result<Option<(usize, f64)>> {
        match self.sampler.select(&self.sys, &self.state.x_curr, &mut self.state.rng)? {
            Selection::AlreadyFeasible => Ok(None),
            Selection::Index(i) => Ok(Some((i, advance(&mut self.state, &self.sys, i, self.delta, self.gamma)))),
        }
    }

    pub fn state(&self) -> &IterateState {
        &self.state
    }

    pub fn into_state(self) -> IterateState {
        self.state
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    MaxIters,
    AlreadyFeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub elapsed_seconds: f64,
    pub positive_residual: f64,
    pub relative_error: Option<f64>,
    pub fsc: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trace: Vec<TraceRecord>,
    pub final_x: DVector<f64>,
    pub cesaro_x: Option<DVector<f64>>,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub final_residual: f64,
    pub final_fsc: f64,
    pub elapsed_seconds: f64,
    pub config: SolverConfig,
}

/// Fraction of rows with `a_i^T x <= b_i`.
pub fn metric_fsc(problem: &ProblemInstance, x: &DVector<f64>) -> f64 {
    fsc_from_residual(&problem.residual(x))
}

fn fsc_from_residual(r: &DVector<f64>) -> f64 {
    r.iter().filter(|v| **v <= 0.0).count() as f64 / r.len() as f64
}

/// `||x - x_ref||_B / ||x0 - x_ref||_B`.
pub fn metric_relative_error(
    metric: &MetricMatrix,
    x: &DVector<f64>,
    x_ref: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<f64> {
    check_dim("iterate", metric.dim(), x.len())?;
    check_dim("reference", metric.dim(), x_ref.len())?;
    check_dim("starting point", metric.dim(), x0.len())?;
    let den = metric.norm_sq(&(x0 - x_ref)).max(0.0).sqrt();
    if den == 0.0 {
        return Err(Error::InvalidParameter("starting point equals the reference point".into()));
    }
    Ok(metric.norm_sq(&(x - x_ref)).max(0.0).sqrt() / den)
}

/// Largest `m * q` for which the stopping check runs on an incrementally updated residual.
const TRACKED_ENTRIES: usize = 4_000_000;
const TRACK_REFRESH: usize = 1000;
const TRACK_SLACK: f64 = 1.01;

/// `A x_k - b` maintained through `r_{k+1} = r_k + gamma (r_k - r_{k-1}) + s A d_i`.
struct ResidualTracker {
    /// Column `i` is `A B^{-1} A^T S_i`.
    effect: DMatrix<f64>,
    curr: DVector<f64>,
    prev: DVector<f64>,
    since_refresh: usize,
}

impl ResidualTracker {
    fn new(sys: &SketchedProblem<'_>, x0: &DVector<f64>) -> Option<Self> {
        let (m, n, q) = (sys.problem.m(), sys.n(), sys.q());
        if m.saturating_mul(q) > TRACKED_ENTRIES || m.saturating_mul(n) > TRACKED_ENTRIES * 4 {
            return None;
        }
        let a = sys.problem.a().to_dense();
        let effect = if sys.sketches.is_coordinate() && sys.metric.is_identity() {
            &a * a.transpose()
        } else {
            let mut d = DMatrix::zeros(n, q);
            for i in 0..q {
                d.set_column(i, &sys.direction(i));
            }
            &a * d
        };
        let r0 = sys.problem.residual(x0);
        Some(ResidualTracker { effect, prev: r0.clone(), curr: r0, since_refresh: 0 })
    }

    fn update(&mut self, i: usize, s: f64, gamma: f64) {
        if gamma == 0.0 {
            self.prev.copy_from(&self.curr);
        } else {
            self.prev.zip_apply(&self.curr, |p, c| *p = c + gamma * (c - *p));
        }
        if s != 0.0 {
            self.prev.axpy(s, &self.effect.column(i), 1.0);
        }
        std::mem::swap(&mut self.prev, &mut self.curr);
        self.since_refresh += 1;
    }

    /// Replaces the tracked pair by exact residuals.
    fn refresh(&mut self, problem: &ProblemInstance, state: &IterateState) {
        self.curr = problem.residual(&state.x_curr);
        self.prev = problem.residual(&state.x_prev);
        self.since_refresh = 0;
    }

    fn positive_norm(&self) -> f64 {
        self.curr.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt()
    }
}

struct Recorder<'a> {
    problem: &'a ProblemInstance,
    metric: &'a MetricMatrix,
    reference: Option<(&'a DVector<f64>, f64)>,
    x0: DVector<f64>,
    start: Instant,
    trace: Vec<TraceRecord>,
}

struct Snapshot {
    residual: f64,
    fsc: f64,
}

impl Recorder<'_> {
    fn measure(&self, x: &DVector<f64>) -> Snapshot {
        let r = self.problem.residual(x);
        let residual = r.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
        Snapshot { residual, fsc: fsc_from_residual(&r) }
    }

    fn record(&mut self, k: usize, x: &DVector<f64>, snap: &Snapshot) {
        if self.trace.last().is_some_and(|t| t.iter == k) {
            return;
        }
        let relative_error = self
            .reference
            .map(|(xr, den)| self.metric.norm_sq(&(x - xr)).max(0.0).sqrt() / den);
        self.trace.push(TraceRecord {
            iter: k,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
            positive_residual: snap.residual,
            relative_error,
            fsc: snap.fsc,
        });
    }
}

/// Runs the momentum method from `x0` until the positive residual reaches the tolerance,
/// the sampler certifies feasibility, or the iteration budget is spent.
///
/// With `x_ref`, trace records carry the relative error `||x_k - x_ref||_B / ||x0 - x_ref||_B`.
pub fn solve(
    sys: SketchedProblem<'_>,
    config: &SolverConfig,
    x0: &DVector<f64>,
    x_ref: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    let mut run = AspmRun::new(sys, config, x0.clone())?;
    let reference = match x_ref {
        Some(xr) => {
            check_dim("reference", sys.n(), xr.len())?;
            let den = sys.metric.norm_sq(&(x0 - xr)).max(0.0).sqrt();
            if den == 0.0 {
                return Err(Error::InvalidParameter("starting point equals the reference point".into()));
            }
            Some((xr, den))
        }
        None => None,
    };
    let mut rec = Recorder {
        problem: sys.problem,
        metric: sys.metric,
        reference,
        x0: x0.clone(),
        start: Instant::now(),
        trace: Vec::new(),
    };
    let mut tracker = ResidualTracker::new(&sys, x0);
    let check_every = match (&tracker, config.check_every) {
        (Some(_), None) => 1,
        _ => config.check_stride(sys.problem.m()),
    };
    let log_every = config.log_every;

    let snap0 = rec.measure(&rec.x0.clone());
    rec.record(0, x0, &snap0);
    let mut last = snap0;
    let terminated_by = if last.residual == 0.0 {
        Termination::AlreadyFeasible
    } else if last.residual <= config.residual_tol {
        Termination::Tolerance
    } else {
        loop {
            let Some((i, s)) = run.step_scaled()? else {
                last = rec.measure(&run.state().x_curr);
                break Termination::AlreadyFeasible;
            };
            let k = run.state().k;
            let mut check = k % check_every == 0 || k == config.max_iters;
            let log = k % log_every == 0;
            if let Some(t) = tracker.as_mut() {
                t.update(i, s, config.gamma);
                if t.since_refresh >= TRACK_REFRESH || log {
                    t.refresh(sys.problem, run.state());
                }
                // exact check only near the tolerance
                check &= k == config.max_iters || t.positive_norm() <= TRACK_SLACK * config.residual_tol;
            }
            if check || log {
                last = rec.measure(&run.state().x_curr);
                if check && last.residual <= config.residual_tol {
                    break Termination::Tolerance;
                }
                if log {
                    rec.record(k, &run.state().x_curr, &last);
                }
            }
            if k >= config.max_iters {
                break Termination::MaxIters;
            }
        }
    };

    let state = run.into_state();
    rec.record(state.k, &state.x_curr, &last);
    let cesaro_x = state.cesaro_x();
    Ok(SolveReport {
        trace: rec.trace,
        elapsed_seconds: rec.start.elapsed().as_secs_f64(),
        final_x: state.x_curr,
        cesaro_x,
        iterations: state.k,
        terminated_by,
        final_residual: last.residual,
        final_fsc: last.fsc,
        config: config.clone(),
    })
}
