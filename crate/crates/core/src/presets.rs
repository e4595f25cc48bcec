//! Named methods as `(metric, sketches, rule)` bundles.
//!
//! | family | metric | sketches |
//! |---|---|---|
//! | Kaczmarz (`MRK`, `MMR`, `MSKM`, `MCK`) | `I` | rows of `A` |
//! | coordinate descent (`MRCD`, `MMCD`, `MSCD`, `MCCD`) | `A` (square SPD) | rows of `A` |
//! | least-squares coordinate descent (`*_LS`) | `A^T A` | rows of the pseudo-inverse |
//!
//! The first letter after `M` picks the rule: `R` uniform, `M` max distance, `S` greedy, `C` capped.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MetricMatrix, ProblemInstance, SketchSet};
use crate::sampling::{SamplingRule, ThresholdMode};

/// Largest column count for the least-squares family, which forms a dense pseudo-inverse.
pub const LS_MAX_COLS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Preset {
    Mrk,
    Mmr,
    Mskm,
    Mck,
    Mrcd,
    Mmcd,
    Mscd,
    Mccd,
    MrcdLs,
    MmcdLs,
    MscdLs,
    MccdLs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Kaczmarz,
    CoordinateDescent,
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RuleKind {
    Random,
    Max,
    Greedy,
    Capped,
}

impl Preset {
    pub const ALL: [Preset; 12] = [
        Preset::Mrk,
        Preset::Mmr,
        Preset::Mskm,
        Preset::Mck,
        Preset::Mrcd,
        Preset::Mmcd,
        Preset::Mscd,
        Preset::Mccd,
        Preset::MrcdLs,
        Preset::MmcdLs,
        Preset::MscdLs,
        Preset::MccdLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mrk => "MRK",
            Preset::Mmr => "MMR",
            Preset::Mskm => "MSKM",
            Preset::Mck => "MCK",
            Preset::Mrcd => "MRCD",
            Preset::Mmcd => "MMCD",
            Preset::Mscd => "MSCD",
            Preset::Mccd => "MCCD",
            Preset::MrcdLs => "MRCD_LS",
            Preset::MmcdLs => "MMCD_LS",
            Preset::MscdLs => "MSCD_LS",
            Preset::MccdLs => "MCCD_LS",
        }
    }

    fn parts(self) -> (Family, RuleKind) {
        use Family::*;
        use RuleKind::*;
        match self {
            Preset::Mrk => (Kaczmarz, Random),
            Preset::Mmr => (Kaczmarz, Max),
            Preset::Mskm => (Kaczmarz, Greedy),
            Preset::Mck => (Kaczmarz, Capped),
            Preset::Mrcd => (CoordinateDescent, Random),
            Preset::Mmcd => (CoordinateDescent, Max),
            Preset::Mscd => (CoordinateDescent, Greedy),
            Preset::Mccd => (CoordinateDescent, Capped),
            Preset::MrcdLs => (LeastSquares, Random),
            Preset::MmcdLs => (LeastSquares, Max),
            Preset::MscdLs => (LeastSquares, Greedy),
            Preset::MccdLs => (LeastSquares, Capped),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == up)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown preset '{s}'")))
    }
}

/// Tunables shared by the presets. `tau` is clamped to the number of sketches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub tau: usize,
    pub theta: f64,
    /// For the uniform presets, sample proportionally to `omega_i` instead.
    pub weighted: bool,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams { tau: 50, theta: 0.5, weighted: false }
    }
}

#[derive(Debug, Clone)]
pub struct MethodBundle {
    pub metric: MetricMatrix,
    pub sketches: SketchSet,
    pub rule: SamplingRule,
}

pub fn preset(name: Preset, problem: &ProblemInstance, params: &PresetParams) -> Result<MethodBundle> {
    let (family, kind) = name.parts();
    let (metric, sketches) = match family {
        Family::Kaczmarz => {
            let metric = MetricMatrix::identity(problem.n());
            let sketches = SketchSet::coordinate(problem, &metric)?;
            (metric, sketches)
        }
        Family::CoordinateDescent => coordinate_descent(name, problem)?,
        Family::LeastSquares => least_squares(name, problem)?,
    };
    let q = sketches.q();
    let rule = match kind {
        RuleKind::Random => SamplingRule::Uniform { weighted: params.weighted },
        RuleKind::Max => SamplingRule::MaxDistance,
        RuleKind::Greedy => SamplingRule::Greedy { tau: params.tau.clamp(1, q) },
        RuleKind::Capped => SamplingRule::Capped {
            theta: params.theta,
            tau1: q,
            tau2: 1,
            threshold: ThresholdMode::Exact,
        },
    };
    rule.validate(q)?;
    Ok(MethodBundle { metric, sketches, rule })
}

fn coordinate_descent(name: Preset, problem: &ProblemInstance) -> Result<(MetricMatrix, SketchSet)> {
    if problem.m() != problem.n() {
        return Err(Error::Precondition(format!(
            "{name} needs a square constraint matrix, got {}x{}",
            problem.m(),
            problem.n()
        )));
    }
    let a = problem.a().to_dense();
    if a != a.transpose() {
        return Err(Error::Precondition(format!("{name} needs a symmetric constraint matrix")));
    }
    let metric = MetricMatrix::dense_spd(a)
        .map_err(|e| Error::Precondition(format!("{name} needs a positive definite constraint matrix: {e}")))?;
    let sketches = SketchSet::coordinate_unit(problem, &metric)?;
    Ok((metric, sketches))
}

fn least_squares(name: Preset, problem: &ProblemInstance) -> Result<(MetricMatrix, SketchSet)> {
    let n = problem.n();
    if n > LS_MAX_COLS {
        return Err(Error::TooLarge { what: "column count for the least-squares presets", limit: LS_MAX_COLS, found: n });
    }
    let a = problem.a().to_dense();
    if let Some(k) = a.iter().position(|v| *v < 0.0) {
        let (i, j) = (k % a.nrows(), k / a.nrows());
        return Err(Error::Precondition(format!("{name} needs A >= 0, but A[{i}, {j}] < 0")));
    }
    let gram = a.tr_mul(&a);
    let gram = (&gram + gram.transpose()) * 0.5;
    let metric = MetricMatrix::dense_spd(gram)
        .map_err(|e| Error::Precondition(format!("{name} needs A with full column rank: {e}")))?;
    // Rows of the pseudo-inverse (A^T A)^{-1} A^T, as m-vectors.
    let pinv = metric.solve_columns(&a.transpose());
    let vectors: Vec<DVector<f64>> = (0..n).map(|i| pinv.row(i).transpose()).collect();
    let scale = pinv.amax();
    let vectors = vectors
        .into_iter()
        .map(|v| v.map(|t| if t < 0.0 && t > -1e-12 * scale { 0.0 } else { t }))
        .collect();
    let sketches = SketchSet::explicit(problem, &metric, vectors).map_err(|e| match e {
        Error::NegativeSketch { sketch, entry } => Error::Precondition(format!(
            "{name} needs a nonnegative pseudo-inverse, but row {sketch} has a negative entry at {entry}"
        )),
        other => other,
    })?;
    Ok((metric, sketches))
}
