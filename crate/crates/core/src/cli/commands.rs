use std::fs;
use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{emit_json, read_config, usage, AnalyzeArgs, CertifyArgs, CliError, CliResult, ConfigFile, GenerateArgs, SolveArgs};
use crate::analysis::{
    analyze as analyze_system, certificate_inputs, certificate_report, max_violation, momentum_gamma_max, rate_basic,
    AnalysisParams, AnalysisReport, CertificateRates,
};
use crate::error::Error;
use crate::io::{gen_gaussian, gen_pd_gaussian, save_instance, write_trace_csv, InstanceKind};
use crate::model::SketchedProblem;
use crate::solver::{self, AspmRun, SolverConfig, StepOutcome, Termination, DEFAULT_START};

pub(super) fn generate(a: &GenerateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let kind: InstanceKind = a.kind.parse().map_err(usage)?;
    let inst = match kind {
        InstanceKind::GaussianFeasibility => {
            let m = a.m.ok_or_else(|| CliError::Usage("--m is required for gaussian instances".into()))?;
            gen_gaussian(m, a.n, a.seed)
        }
        InstanceKind::PdGaussian => {
            if a.m.is_some_and(|m| m != a.n) {
                return Err(CliError::Usage("pdgaussian instances are square; omit --m or set it to --n".into()));
            }
            gen_pd_gaussian(a.n, a.seed)
        }
    }
    .map_err(usage)?;
    save_instance(&inst, &a.out)?;
    writeln!(stdout, "wrote {} {}x{} instance to {}", kind, inst.problem.m(), inst.problem.n(), a.out.display())
        .map_err(Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub method: String,
    pub rule: String,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub terminated_by: Termination,
    pub iterations: usize,
    pub elapsed_seconds: f64,
    pub final_residual: f64,
    pub final_fsc: f64,
    pub final_relative_error: Option<f64>,
    /// Largest admissible momentum, when it was evaluated.
    pub gamma_max: Option<f64>,
    pub gamma_admissible: Option<bool>,
}

/// Evaluates the admissible momentum bound and reports a violation.
fn momentum_check(
    sys: &SketchedProblem<'_>,
    config: &SolverConfig,
    strict: bool,
    stderr: &mut dyn Write,
) -> CliResult<Option<(f64, bool)>> {
    let params = AnalysisParams { delta: config.delta, gamma: config.gamma, ..Default::default() };
    let report = match analyze_system(sys, &config.rule, &params) {
        Ok(r) => r,
        Err(e) if !strict => {
            let _ = writeln!(stderr, "warning: momentum bound not evaluated: {e}");
            return Ok(None);
        }
        Err(e) => return Err(e.into()),
    };
    let ok = report.in_q;
    if !ok {
        let msg = format!("gamma = {} is not below gamma_max = {:.6e}", config.gamma, report.gamma_max);
        if strict {
            return Err(CliError::Failure(
                Error::RegionViolation { region: "Q", inequality: report.violated.join("; ") }.to_string() + ": " + &msg,
            ));
        }
        let _ = writeln!(stderr, "warning: {msg}; convergence rates do not apply");
    }
    Ok(Some((report.gamma_max, ok)))
}

pub(super) fn solve(a: SolveArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let file: ConfigFile = read_config(a.config.as_deref())?;
    let method_args = a.method.clone().or(file.method());
    let run_args = a.run.clone().or(file.run());
    let inst = a.instance.resolve()?;
    let method = method_args.build(&inst.problem)?;
    let sys = SketchedProblem::new(&inst.problem, &method.metric, &method.sketches)?;
    let config = SolverConfig {
        delta: method_args.delta(),
        gamma: method_args.gamma(),
        rule: method.rule,
        max_iters: run_args.max_iters.unwrap_or(300_000),
        residual_tol: run_args.tol.unwrap_or(1e-5),
        seed: method_args.seed(),
        stream: 0,
        track_cesaro: false,
        check_every: run_args.check_every,
        log_every: run_args.log_every.unwrap_or(1),
    };
    config.validate()?;

    let bound = if config.gamma == 0.0 {
        None
    } else if a.no_region_check {
        let _ = writeln!(stderr, "warning: momentum gamma = {} used without an admissibility check", config.gamma);
        None
    } else {
        momentum_check(&sys, &config, a.strict_region, stderr)?
    };

    let x0 = DVector::from_element(inst.problem.n(), run_args.start.unwrap_or(DEFAULT_START));
    let x_ref = inst.x_int.as_ref().filter(|x| **x != x0);
    let report = solver::solve(sys, &config, &x0, x_ref)?;
    let summary = SolveSummary {
        m: inst.problem.m(),
        n: inst.problem.n(),
        q: sys.q(),
        method: method.preset.map_or_else(|| "kaczmarz".to_string(), |p| p.name().to_ascii_lowercase()),
        rule: config.rule.to_string(),
        delta: config.delta,
        gamma: config.gamma,
        seed: config.seed,
        max_iters: config.max_iters,
        tol: config.residual_tol,
        terminated_by: report.terminated_by,
        iterations: report.iterations,
        elapsed_seconds: report.elapsed_seconds,
        final_residual: report.final_residual,
        final_fsc: report.final_fsc,
        final_relative_error: report.trace.last().and_then(|t| t.relative_error),
        gamma_max: bound.map(|b| b.0),
        gamma_admissible: bound.map(|b| b.1),
    };
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(Error::from)?;
        write_trace_csv(&report.trace, &dir.join("trace.csv"))?;
    }
    emit_json(&summary, a.out.as_deref(), "summary.json", stdout)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub h: f64,
    pub gamma_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOutput {
    pub report: AnalysisReport,
    /// `h` and `gamma_max` on equally spaced step sizes in (0, 2).
    pub curve: Vec<CurvePoint>,
}

fn analysis_for(
    instance: &super::InstanceArgs,
    method: &super::MethodArgs,
    zeta: Option<f64>,
    hoffman: Option<f64>,
) -> CliResult<(super::Resolved, super::Method, AnalysisParams)> {
    let inst = instance.resolve()?;
    let m = method.build(&inst.problem)?;
    let delta = method.delta();
    if !(delta > 0.0 && delta < 2.0) {
        return Err(CliError::Failure(format!("delta = {delta} must lie in (0, 2)")));
    }
    let params = AnalysisParams { delta, gamma: method.gamma(), zeta, hoffman, k: None };
    Ok((inst, m, params))
}

pub(super) fn analyze(a: &AnalyzeArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (inst, method, params) = analysis_for(&a.instance, &a.method, a.zeta, a.hoffman)?;
    let sys = SketchedProblem::new(&inst.problem, &method.metric, &method.sketches)?;
    let report = analyze_system(&sys, &method.rule, &params)?;
    let steps = a.curve_points;
    let curve = (1..=steps)
        .map(|j| {
            let delta = 2.0 * j as f64 / (steps + 1) as f64;
            Ok(CurvePoint {
                delta,
                h: rate_basic(delta, report.mu1)?,
                gamma_max: momentum_gamma_max(delta, report.mu1, report.mu2)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    emit_json(&AnalyzeOutput { report, curve }, a.out.as_deref(), "analysis.json", stdout)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOutput {
    pub rule: String,
    pub delta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub sigma_enc: f64,
    /// `2^(1 - sigma_enc)`.
    pub threshold: f64,
    pub iteration_lower_bound: f64,
    pub iteration_budget: usize,
    pub achieved: bool,
    pub achieved_at: Option<usize>,
    pub iterations_run: usize,
    pub final_violation: f64,
    /// Smallest maximum violation over all iterates, the origin included.
    pub min_violation: f64,
    /// Failure probability bound at the achieved iteration, or at the last one.
    pub failure_prob_bound: f64,
    pub log_failure_prob: f64,
    pub rho_bar: f64,
    pub alpha: f64,
}

/// Hard cap on the default iteration budget of `certify`.
const CERTIFY_MAX_BUDGET: f64 = 1e7;

pub(super) fn certify(a: &CertifyArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (inst, method, params) = analysis_for(&a.instance, &a.method, a.zeta, a.hoffman)?;
    let problem = &inst.problem;
    let sys = SketchedProblem::new(problem, &method.metric, &method.sketches)?;
    let report = analyze_system(&sys, &method.rule, &params)?;
    let rates = CertificateRates { rho2: report.rho2, l2: report.alpha.zip(report.rho) };
    match rates.rho_bar() {
        Some((rb, _)) if rb < 1.0 => {}
        Some((rb, _)) => return Err(CliError::Failure(format!("contraction factor {rb} is not below 1"))),
        None => {
            return Err(CliError::Failure(format!(
                "no contraction rate for these parameters: {}",
                report.violated.join("; ")
            )))
        }
    }
    let inputs = certificate_inputs(problem, &method.metric);
    let origin = DVector::zeros(problem.n());
    let at_origin = certificate_report(problem, &origin, 1, &rates, &inputs)?;
    let budget = a
        .max_iters
        .unwrap_or_else(|| at_origin.iteration_lower_bound.ceil().clamp(1.0, CERTIFY_MAX_BUDGET) as usize);

    let config = SolverConfig {
        delta: params.delta,
        gamma: params.gamma,
        rule: method.rule,
        seed: a.method.seed(),
        ..Default::default()
    };
    let mut run = AspmRun::new(sys, &config, origin.clone())?;
    let mut theta = max_violation(problem, &origin);
    let mut min_violation = theta;
    let mut achieved_at = (theta < at_origin.threshold).then_some(0);
    while achieved_at.is_none() && run.state().k < budget {
        let outcome = run.step()?;
        theta = max_violation(problem, &run.state().x_curr);
        min_violation = min_violation.min(theta);
        if theta < at_origin.threshold {
            achieved_at = Some(run.state().k);
        }
        if outcome == StepOutcome::AlreadyFeasible {
            break;
        }
    }
    let k = achieved_at.unwrap_or(run.state().k);
    let at_k = certificate_report(problem, &run.state().x_curr, k.max(1), &rates, &inputs)?;
    let out = CertifyOutput {
        rule: method.rule.to_string(),
        delta: params.delta,
        gamma: params.gamma,
        seed: config.seed,
        sigma_enc: inputs.sigma_enc,
        threshold: at_origin.threshold,
        iteration_lower_bound: at_origin.iteration_lower_bound,
        iteration_budget: budget,
        achieved: achieved_at.is_some(),
        achieved_at,
        iterations_run: run.state().k,
        final_violation: theta,
        min_violation,
        failure_prob_bound: at_k.failure_prob_bound,
        log_failure_prob: at_k.log_failure_prob,
        rho_bar: at_k.rho_bar,
        alpha: at_k.alpha,
    };
    emit_json(&out, a.out.as_deref(), "certificate.json", stdout)
}
