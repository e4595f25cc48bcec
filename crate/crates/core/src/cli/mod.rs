//! Command-line harness: `generate`, `solve`, `bench`, `analyze` and `certify`.
//!
//! Exit codes are 0 on success, 1 for numeric or region failures and 2 for usage or I/O errors.

mod bench;
mod commands;

pub use bench::{aggregate_by_iteration, aggregate_by_time, BenchSpec, CellSummary, DEFAULT_RULE_GRID};
pub use commands::{AnalyzeOutput, CertifyOutput, CurvePoint, SolveSummary};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::io::{gen_gaussian, gen_pd_gaussian, load_instance_dir, load_matrix_market, InstanceKind};
use crate::model::{MetricMatrix, ProblemInstance, SketchSet};
use crate::presets::{preset, Preset, PresetParams};
use crate::sampling::SamplingRule;

#[derive(Debug, Parser)]
#[command(name = "aspm", version, about = "Sketch-and-project solvers for linear feasibility problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic instance (A.mtx, b.txt, meta.json) to a directory.
    Generate(GenerateArgs),
    /// Run one solve and write its trace and summary.
    Solve(SolveArgs),
    /// Run a grid of sampling rules and momentum values over repeated trials.
    Bench(BenchArgs),
    /// Print spectral constants, rates and admissible momentum as JSON.
    Analyze(AnalyzeArgs),
    /// Run from the origin until the maximum violation certifies feasibility.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// `gaussian` or `pdgaussian`.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Where the instance comes from. Exactly one source must be given.
#[derive(Debug, Args, Clone, Default)]
pub struct InstanceArgs {
    /// Directory holding A.mtx, optionally b.txt and meta.json.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Matrix Market file for A.
    #[arg(long, conflicts_with = "instance")]
    pub matrix: Option<PathBuf>,
    /// Right-hand side file; defaults to zeros.
    #[arg(long, requires = "matrix")]
    pub rhs: Option<PathBuf>,
    /// In-memory instance: `gaussian:M:N:SEED` or `pdgaussian:N:SEED`.
    #[arg(long, conflicts_with_all = ["instance", "matrix"])]
    pub generated: Option<String>,
}

/// Method selection and shared run parameters. Unset values fall back to the JSON config,
/// then to defaults.
#[derive(Debug, Args, Clone, Default)]
pub struct MethodArgs {
    /// Named preset such as `mskm`, `mscd` or `mscd_ls`; plain Kaczmarz when absent.
    #[arg(long)]
    pub preset: Option<String>,
    /// Sampling rule overriding the preset's, e.g. `greedy:100` or `capped:0.5:1:m`.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub weighted: Option<bool>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl MethodArgs {
    fn or(self, other: MethodArgs) -> MethodArgs {
        MethodArgs {
            preset: self.preset.or(other.preset),
            rule: self.rule.or(other.rule),
            tau: self.tau.or(other.tau),
            theta: self.theta.or(other.theta),
            weighted: self.weighted.or(other.weighted),
            delta: self.delta.or(other.delta),
            gamma: self.gamma.or(other.gamma),
            seed: self.seed.or(other.seed),
        }
    }

    fn delta(&self) -> f64 {
        self.delta.unwrap_or(1.0)
    }

    fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.0)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Stopping and output parameters shared by `solve` and `bench`.
#[derive(Debug, Args, Clone, Default)]
pub struct RunArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Positive residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Stride of trace records.
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub check_every: Option<usize>,
    /// Value of every coordinate of the starting point.
    #[arg(long)]
    pub start: Option<f64>,
}

impl RunArgs {
    fn or(self, other: RunArgs) -> RunArgs {
        RunArgs {
            max_iters: self.max_iters.or(other.max_iters),
            tol: self.tol.or(other.tol),
            log_every: self.log_every.or(other.log_every),
            check_every: self.check_every.or(other.check_every),
            start: self.start.or(other.start),
        }
    }
}

/// Keys accepted in a `--config` JSON file. Command-line flags override them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub rule: Option<String>,
    pub tau: Option<usize>,
    pub theta: Option<f64>,
    pub weighted: Option<bool>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub log_every: Option<usize>,
    pub check_every: Option<usize>,
    pub start: Option<f64>,
    pub rules: Option<Vec<String>>,
    pub gammas: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub jobs: Option<usize>,
    pub time_bins: Option<usize>,
}

impl ConfigFile {
    fn method(&self) -> MethodArgs {
        MethodArgs {
            preset: self.preset.clone(),
            rule: self.rule.clone(),
            tau: self.tau,
            theta: self.theta,
            weighted: self.weighted,
            delta: self.delta,
            gamma: self.gamma,
            seed: self.seed,
        }
    }

    fn run(&self) -> RunArgs {
        RunArgs {
            max_iters: self.max_iters,
            tol: self.tol,
            log_every: self.log_every,
            check_every: self.check_every,
            start: self.start,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// JSON file with any of the method and run keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip the momentum admissibility check.
    #[arg(long)]
    pub no_region_check: bool,
    /// Fail instead of warning when momentum lies outside the admissible range.
    #[arg(long, conflicts_with = "no_region_check")]
    pub strict_region: bool,
    /// Directory for trace.csv and summary.json; the summary goes to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma separated sampling rules.
    #[arg(long, value_delimiter = ',')]
    pub rules: Option<Vec<String>>,
    /// Comma separated momentum values.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads for cells and trials.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also write mean traces on this many equal time bins.
    #[arg(long)]
    pub time_bins: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Hoffman constant to use instead of the computed one.
    #[arg(long)]
    pub hoffman: Option<f64>,
    /// Number of step sizes sampled in (0, 2) for the curves.
    #[arg(long, default_value_t = 19)]
    pub curve_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub hoffman: Option<f64>,
    /// Iteration budget; defaults to the iteration bound of the certificate.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match run(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Generate(a) => commands::generate(&a, stdout),
        Command::Solve(a) => commands::solve(a, stdout, stderr),
        Command::Bench(a) => bench::bench(a, stdout, stderr),
        Command::Analyze(a) => commands::analyze(&a, stdout),
        Command::Certify(a) => commands::certify(&a, stdout),
    }
}

/// A resolved instance with its generating point when known.
pub struct Resolved {
    pub problem: ProblemInstance,
    pub x_int: Option<DVector<f64>>,
}

fn parse_generated(spec: &str) -> CliResult<Resolved> {
    let bad = || CliError::Usage(format!("bad instance spec '{spec}', expected gaussian:M:N:SEED or pdgaussian:N:SEED"));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
    let kind: InstanceKind = parts.first().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let g = match (kind, parts.as_slice()) {
        (InstanceKind::GaussianFeasibility, [_, m, n, seed]) => {
            gen_gaussian(num(m)? as usize, num(n)? as usize, num(seed)?).map_err(usage)?
        }
        (InstanceKind::PdGaussian, [_, n, seed]) => gen_pd_gaussian(num(n)? as usize, num(seed)?).map_err(usage)?,
        _ => return Err(bad()),
    };
    Ok(Resolved { problem: g.problem, x_int: Some(g.x_int) })
}

impl InstanceArgs {
    pub fn resolve(&self) -> CliResult<Resolved> {
        match (&self.instance, &self.matrix, &self.generated) {
            (Some(dir), None, None) => {
                if !dir.is_dir() {
                    return Err(CliError::Usage(format!("instance directory '{}' not found", dir.display())));
                }
                let l = load_instance_dir(dir).map_err(usage)?;
                Ok(Resolved { problem: l.problem, x_int: l.x_int })
            }
            (None, Some(a), None) => {
                let problem = load_matrix_market(a, self.rhs.as_deref()).map_err(usage)?;
                Ok(Resolved { problem, x_int: None })
            }
            (None, None, Some(spec)) => parse_generated(spec),
            _ => Err(CliError::Usage("give exactly one of --instance, --matrix or --generated".into())),
        }
    }
}

/// Metric, sketches and rule of a method.
pub struct Method {
    pub metric: MetricMatrix,
    pub sketches: SketchSet,
    pub rule: SamplingRule,
    pub preset: Option<Preset>,
}

impl MethodArgs {
    pub fn build(&self, problem: &ProblemInstance) -> CliResult<Method> {
        let mut method = match &self.preset {
            Some(name) => {
                let p: Preset = name.parse().map_err(usage)?;
                let defaults = PresetParams::default();
                let params = PresetParams {
                    tau: self.tau.unwrap_or(defaults.tau),
                    theta: self.theta.unwrap_or(defaults.theta),
                    weighted: self.weighted.unwrap_or(defaults.weighted),
                };
                let b = preset(p, problem, &params)?;
                Method { metric: b.metric, sketches: b.sketches, rule: b.rule, preset: Some(p) }
            }
            None => {
                let metric = MetricMatrix::identity(problem.n());
                let sketches = SketchSet::coordinate(problem, &metric)?;
                let rule = match self.tau {
                    Some(tau) => SamplingRule::Greedy { tau },
                    None => SamplingRule::Uniform { weighted: self.weighted.unwrap_or(false) },
                };
                Method { metric, sketches, rule, preset: None }
            }
        };
        if let Some(r) = &self.rule {
            method.rule = SamplingRule::parse(r, method.sketches.q()).map_err(usage)?;
        }
        method.rule.validate(method.sketches.q())?;
        Ok(method)
    }
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config '{}': {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config '{}': {e}", p.display())))
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>, file: &str, stdout: &mut dyn Write) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(Error::from)?;
            fs::write(dir.join(file), text).map_err(Error::from)?;
        }
        None => stdout.write_all(text.as_bytes()).map_err(Error::from)?,
    }
    Ok(())
}
