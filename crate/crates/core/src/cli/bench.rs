use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_config, BenchArgs, CliError, CliResult, ConfigFile};
use crate::error::{Error, Result};
use crate::io::format_trace_csv;
use crate::model::SketchedProblem;
use crate::sampling::SamplingRule;
use crate::solver::{solve, SolveReport, SolverConfig, Termination, TraceRecord, DEFAULT_START};

/// Uniform, greedy with 5, 50 and 100 samples, maximum distance, and the capped rule
/// halfway between the mean and the maximum.
pub const DEFAULT_RULE_GRID: [&str; 6] = ["uniform", "greedy:5", "greedy:50", "greedy:100", "max", "capped:0.5:1:m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub rules: Vec<String>,
    pub delta: f64,
    pub gammas: Vec<f64>,
    pub trials: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub log_every: usize,
    pub check_every: Option<usize>,
    pub start: f64,
    pub jobs: usize,
    pub time_bins: Option<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            rules: DEFAULT_RULE_GRID.iter().map(|s| s.to_string()).collect(),
            delta: 1.0,
            gammas: vec![0.0],
            trials: 10,
            max_iters: 300_000,
            tol: 1e-5,
            seed: 0,
            log_every: 1,
            check_every: None,
            start: DEFAULT_START,
            jobs: 1,
            time_bins: None,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() || self.gammas.is_empty() {
            return Err(Error::InvalidParameter("rule and momentum grids must be nonempty".into()));
        }
        if self.trials == 0 || self.jobs == 0 {
            return Err(Error::InvalidParameter("trials and jobs must be positive".into()));
        }
        if self.time_bins == Some(0) {
            return Err(Error::InvalidParameter("time_bins must be positive".into()));
        }
        Ok(())
    }
}

/// Aggregate of one (rule, momentum) cell over its trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub rule: String,
    pub gamma: f64,
    pub trials: usize,
    pub tolerance_hits: usize,
    pub feasible_hits: usize,
    pub max_iter_hits: usize,
    pub mean_iterations: Option<f64>,
    /// Means over the trials that reached the tolerance or a feasible point.
    pub mean_iters_to_tol: Option<f64>,
    pub mean_seconds_to_tol: Option<f64>,
    pub mean_final_residual: Option<f64>,
    pub mean_final_fsc: Option<f64>,
    pub min_final_fsc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BenchReport {
    m: usize,
    n: usize,
    q: usize,
    spec: BenchSpec,
    cells: Vec<CellSummary>,
}

fn value_at(trace: &[TraceRecord], key: impl Fn(&TraceRecord) -> f64, t: f64) -> &TraceRecord {
    let idx = trace.partition_point(|r| key(r) <= t);
    &trace[idx.saturating_sub(1)]
}

fn mean_record(points: &[&TraceRecord], iter: usize, elapsed: Option<f64>) -> TraceRecord {
    let n = points.len() as f64;
    let mean = |f: &dyn Fn(&TraceRecord) -> f64| points.iter().map(|r| f(r)).sum::<f64>() / n;
    let relative_error = points
        .iter()
        .map(|r| r.relative_error)
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / n);
    TraceRecord {
        iter,
        elapsed_seconds: elapsed.unwrap_or_else(|| mean(&|r| r.elapsed_seconds)),
        positive_residual: mean(&|r| r.positive_residual),
        relative_error,
        fsc: mean(&|r| r.fsc),
    }
}

/// Mean trace on the union of recorded iterations. A trial that stopped early contributes
/// its last record to every later iteration.
pub fn aggregate_by_iteration(traces: &[Vec<TraceRecord>]) -> Vec<TraceRecord> {
    let traces: Vec<&Vec<TraceRecord>> = traces.iter().filter(|t| !t.is_empty()).collect();
    let mut grid: Vec<usize> = traces.iter().flat_map(|t| t.iter().map(|r| r.iter)).collect();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .map(|k| {
            let pts: Vec<&TraceRecord> = traces.iter().map(|t| value_at(t, |r| r.iter as f64, k as f64)).collect();
            mean_record(&pts, k, None)
        })
        .collect()
}

/// Mean trace on `bins + 1` equally spaced times up to the longest trial. The `iter`
/// column holds the bin index.
pub fn aggregate_by_time(traces: &[Vec<TraceRecord>], bins: usize) -> Vec<TraceRecord> {
    let traces: Vec<&Vec<TraceRecord>> = traces.iter().filter(|t| !t.is_empty()).collect();
    let t_max = traces.iter().filter_map(|t| t.last()).map(|r| r.elapsed_seconds).fold(0.0, f64::max);
    (0..=bins)
        .map(|b| {
            let t = t_max * b as f64 / bins.max(1) as f64;
            let pts: Vec<&TraceRecord> = traces.iter().map(|tr| value_at(tr, |r| r.elapsed_seconds, t)).collect();
            mean_record(&pts, b, Some(t))
        })
        .collect()
}

fn cell_name(index: usize, rule: &str, gamma: f64) -> String {
    let rule: String = rule.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' }).collect();
    format!("{index:02}_{rule}_g{gamma}")
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn summarize(cell: String, rule: String, gamma: f64, runs: &[SolveReport], error: Option<String>, trials: usize) -> CellSummary {
    let converged: Vec<&SolveReport> = runs
        .iter()
        .filter(|r| matches!(r.terminated_by, Termination::Tolerance | Termination::AlreadyFeasible))
        .collect();
    let count = |t: Termination| runs.iter().filter(|r| r.terminated_by == t).count();
    CellSummary {
        cell,
        rule,
        gamma,
        trials,
        tolerance_hits: count(Termination::Tolerance),
        feasible_hits: count(Termination::AlreadyFeasible),
        max_iter_hits: count(Termination::MaxIters),
        mean_iterations: mean(runs.iter().map(|r| r.iterations as f64)),
        mean_iters_to_tol: mean(converged.iter().map(|r| r.iterations as f64)),
        mean_seconds_to_tol: mean(converged.iter().map(|r| r.elapsed_seconds)),
        mean_final_residual: mean(runs.iter().map(|r| r.final_residual)),
        mean_final_fsc: mean(runs.iter().map(|r| r.final_fsc)),
        min_final_fsc: runs.iter().map(|r| r.final_fsc).reduce(f64::min),
        error,
    }
}

const SUMMARY_HEADER: &str = "cell,rule,gamma,trials,tolerance_hits,feasible_hits,max_iter_hits,mean_iterations,\
mean_iters_to_tol,mean_seconds_to_tol,mean_final_residual,mean_final_fsc,min_final_fsc,error";

fn summary_csv(cells: &[CellSummary]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    let mut s = format!("{SUMMARY_HEADER}\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.cell,
            c.rule,
            c.gamma,
            c.trials,
            c.tolerance_hits,
            c.feasible_hits,
            c.max_iter_hits,
            f(c.mean_iterations),
            f(c.mean_iters_to_tol),
            f(c.mean_seconds_to_tol),
            f(c.mean_final_residual),
            f(c.mean_final_fsc),
            f(c.min_final_fsc),
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    s
}

fn spec_from(a: &BenchArgs, file: &ConfigFile) -> BenchSpec {
    let d = BenchSpec::default();
    let method = a.method.clone().or(file.method());
    let run = a.run.clone().or(file.run());
    BenchSpec {
        rules: a.rules.clone().or_else(|| file.rules.clone()).unwrap_or(d.rules),
        delta: method.delta(),
        gammas: a.gammas.clone().or_else(|| file.gammas.clone()).unwrap_or(d.gammas),
        trials: a.trials.or(file.trials).unwrap_or(d.trials),
        max_iters: run.max_iters.unwrap_or(d.max_iters),
        tol: run.tol.unwrap_or(d.tol),
        seed: method.seed(),
        log_every: run.log_every.unwrap_or(d.log_every),
        check_every: run.check_every,
        start: run.start.unwrap_or(d.start),
        jobs: a.jobs.or(file.jobs).unwrap_or(d.jobs),
        time_bins: a.time_bins.or(file.time_bins),
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::from)?;
    }
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

pub(super) fn bench(a: BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    let file: ConfigFile = read_config(a.config.as_deref())?;
    let spec = spec_from(&a, &file);
    spec.validate()?;
    let method_args = a.method.clone().or(file.method());
    if method_args.rule.is_some() {
        return Err(CliError::Usage("bench takes --rules, not --rule".into()));
    }
    let inst = a.instance.resolve()?;
    let method = method_args.build(&inst.problem)?;
    let sys = SketchedProblem::new(&inst.problem, &method.metric, &method.sketches)?;
    let q = sys.q();
    let x0 = nalgebra::DVector::from_element(inst.problem.n(), spec.start);
    let x_ref = inst.x_int.as_ref().filter(|x| **x != x0);

    struct Cell {
        name: String,
        rule: String,
        gamma: f64,
        parsed: Result<SamplingRule>,
    }
    let mut cells = Vec::new();
    for rule in &spec.rules {
        for &gamma in &spec.gammas {
            let name = cell_name(cells.len(), rule, gamma);
            cells.push(Cell { name, rule: rule.clone(), gamma, parsed: SamplingRule::parse(rule, q) });
        }
    }
    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.parsed.is_ok())
        .flat_map(|(ci, _)| (0..spec.trials).map(move |t| (ci, t)))
        .collect();

    let run_task = |&(ci, t): &(usize, usize)| -> Result<SolveReport> {
        let cell = &cells[ci];
        let config = SolverConfig {
            delta: spec.delta,
            gamma: cell.gamma,
            rule: *cell.parsed.as_ref().expect("only parsed cells are scheduled"),
            max_iters: spec.max_iters,
            residual_tol: spec.tol,
            seed: spec.seed,
            stream: t as u64,
            track_cesaro: false,
            check_every: spec.check_every,
            log_every: spec.log_every,
        };
        solve(sys, &config, &x0, x_ref)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| CliError::Failure(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<SolveReport>> = pool.install(|| tasks.par_iter().map(run_task).collect());

    let mut by_cell: Vec<Vec<(usize, Result<SolveReport>)>> = (0..cells.len()).map(|_| Vec::new()).collect();
    for (&(ci, t), r) in tasks.iter().zip(results) {
        by_cell[ci].push((t, r));
    }

    let mut summaries = Vec::with_capacity(cells.len());
    for (cell, runs) in cells.iter().zip(by_cell) {
        let mut error = cell.parsed.as_ref().err().map(|e| e.to_string());
        let mut ok = Vec::new();
        for (t, r) in runs {
            match r {
                Ok(report) => {
                    write(&trial_path(&a.out, &cell.name, t), &format_trace_csv(&report.trace))?;
                    ok.push(report);
                }
                Err(e) => {
                    let _ = writeln!(stderr, "warning: cell {} trial {t} failed: {e}", cell.name);
                    error.get_or_insert_with(|| format!("trial {t}: {e}"));
                }
            }
        }
        if !ok.is_empty() {
            let traces: Vec<Vec<TraceRecord>> = ok.iter().map(|r| r.trace.clone()).collect();
            write(&a.out.join("mean").join(format!("{}.csv", cell.name)), &format_trace_csv(&aggregate_by_iteration(&traces)))?;
            if let Some(bins) = spec.time_bins {
                write(
                    &a.out.join("mean_time").join(format!("{}.csv", cell.name)),
                    &format_trace_csv(&aggregate_by_time(&traces, bins)),
                )?;
            }
        }
        summaries.push(summarize(cell.name.clone(), cell.rule.clone(), cell.gamma, &ok, error, spec.trials));
    }

    let table = summary_csv(&summaries);
    write(&a.out.join("summary.csv"), &table)?;
    let report = BenchReport { m: inst.problem.m(), n: inst.problem.n(), q, spec, cells: summaries };
    write(&a.out.join("summary.json"), &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    stdout.write_all(table.as_bytes()).map_err(Error::from)?;
    Ok(())
}

fn trial_path(out: &Path, cell: &str, trial: usize) -> std::path::PathBuf {
    out.join("trials").join(cell).join(format!("trial_{trial:03}.csv"))
}
