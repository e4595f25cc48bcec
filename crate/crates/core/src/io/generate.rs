use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    GaussianFeasibility,
    PdGaussian,
}

impl std::fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InstanceKind::GaussianFeasibility => "gaussian",
            InstanceKind::PdGaussian => "pdgaussian",
        })
    }
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gaussian" | "gaussianfeasibility" => Ok(InstanceKind::GaussianFeasibility),
            "pdgaussian" | "pd" => Ok(InstanceKind::PdGaussian),
            _ => Err(Error::InvalidParameter(format!("unknown instance kind '{s}'"))),
        }
    }
}

/// A synthetic instance together with the interior point it was built around.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub problem: ProblemInstance,
    pub x_int: DVector<f64>,
    pub kind: InstanceKind,
    pub seed: u64,
}

/// ChaCha stream ids of the three variate blocks drawn from one seed.
const STREAM_MATRIX: u64 = 0;
const STREAM_POINT: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn normals(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Row-major `rows x cols` standard normal matrix.
fn normal_matrix(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &normals(seed, STREAM_MATRIX, rows * cols))
}

fn finish(a: DMatrix<f64>, seed: u64, kind: InstanceKind) -> Result<GeneratedInstance> {
    let x_int = DVector::from_vec(normals(seed, STREAM_POINT, a.ncols()));
    let eps = DVector::from_vec(normals(seed, STREAM_NOISE, a.nrows()));
    let b = &a * &x_int + eps.abs();
    let problem = ProblemInstance::from_dense(a, b)?;
    Ok(GeneratedInstance { problem, x_int, kind, seed })
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("instance shape {m}x{n} must be nonempty")));
    }
    Ok(())
}

/// `A` and `x_int` standard normal, `b = A x_int + |eps|`.
///
/// Variates are ChaCha8 streams transformed by the ziggurat sampler of `rand_distr`.
pub fn gen_gaussian(m: usize, n: usize, seed: u64) -> Result<GeneratedInstance> {
    check_shape(m, n)?;
    finish(normal_matrix(seed, m, n), seed, InstanceKind::GaussianFeasibility)
}

/// `A = G^T G` for a square standard normal `G`, made exactly symmetric, with `b` as in
/// [`gen_gaussian`].
pub fn gen_pd_gaussian(n: usize, seed: u64) -> Result<GeneratedInstance> {
    check_shape(n, n)?;
    let g = normal_matrix(seed, n, n);
    let mut a = g.tr_mul(&g);
    for j in 0..n {
        for i in (j + 1)..n {
            a[(i, j)] = a[(j, i)];
        }
    }
    finish(a, seed, InstanceKind::PdGaussian)
}

/// Rebuilds a generated instance from its kind, shape and seed.
pub fn regenerate(kind: InstanceKind, m: usize, n: usize, seed: u64) -> Result<GeneratedInstance> {
    match kind {
        InstanceKind::GaussianFeasibility => gen_gaussian(m, n, seed),
        InstanceKind::PdGaussian => {
            if m != n {
                return Err(Error::InvalidParameter(format!("pd instances are square, got {m}x{n}")));
            }
            gen_pd_gaussian(n, seed)
        }
    }
}
