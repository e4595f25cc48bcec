//! Synthetic instance generators, Matrix Market files, trace CSVs and instance directories.

mod generate;
mod matrix_market;
mod trace;

pub use generate::{gen_gaussian, gen_pd_gaussian, regenerate, GeneratedInstance, InstanceKind};
pub use matrix_market::{
    format_matrix_market, format_vector, load_matrix_market, parse_matrix_market, parse_vector, read_matrix_market,
    read_vector, write_matrix_market, write_vector,
};
pub use trace::{format_trace_csv, parse_trace_csv, read_trace_csv, write_trace_csv, TRACE_HEADER};

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ProblemInstance;

pub const MATRIX_FILE: &str = "A.mtx";
pub const RHS_FILE: &str = "b.txt";
pub const META_FILE: &str = "meta.json";

/// Sidecar describing how an instance directory was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub m: usize,
    pub n: usize,
    pub kind: InstanceKind,
    pub seed: u64,
}

impl GeneratedInstance {
    pub fn meta(&self) -> InstanceMeta {
        InstanceMeta { m: self.problem.m(), n: self.problem.n(), kind: self.kind, seed: self.seed }
    }
}

/// Writes `A.mtx`, `b.txt` and `meta.json` into `dir`, creating it if needed.
pub fn save_instance(inst: &GeneratedInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_market(inst.problem.a(), &dir.join(MATRIX_FILE))?;
    write_vector(inst.problem.b(), &dir.join(RHS_FILE))?;
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&inst.meta())? + "\n")?;
    Ok(())
}

/// An instance read from disk, with the generating point when a metadata sidecar exists.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub problem: ProblemInstance,
    pub x_int: Option<DVector<f64>>,
    pub meta: Option<InstanceMeta>,
}

/// Reads an instance directory. A missing `b.txt` means `b = 0`.
pub fn load_instance_dir(dir: &Path) -> Result<LoadedInstance> {
    let rhs = dir.join(RHS_FILE);
    let problem = load_matrix_market(&dir.join(MATRIX_FILE), rhs.exists().then_some(rhs.as_path()))?;
    let meta_path = dir.join(META_FILE);
    let (meta, x_int) = if meta_path.exists() {
        let meta: InstanceMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
        let generated = regenerate(meta.kind, meta.m, meta.n, meta.seed)?;
        let x_int = (generated.problem.n() == problem.n()).then_some(generated.x_int);
        (Some(meta), x_int)
    } else {
        (None, None)
    };
    Ok(LoadedInstance { problem, x_int, meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::metric_fsc;

    #[test]
    fn directory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = gen_gaussian(15, 4, 5).unwrap();
        save_instance(&g, dir.path()).unwrap();
        let l = load_instance_dir(dir.path()).unwrap();
        assert_eq!(l.problem.a().to_dense(), g.problem.a().to_dense());
        assert_eq!(l.problem.b(), g.problem.b());
        assert_eq!(l.x_int.as_ref(), Some(&g.x_int));
        assert_eq!(l.meta, Some(g.meta()));
        assert_eq!(metric_fsc(&l.problem, &g.x_int), 1.0);
    }

    #[test]
    fn repeated_save_is_byte_identical() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        save_instance(&gen_pd_gaussian(5, 2).unwrap(), d1.path()).unwrap();
        save_instance(&gen_pd_gaussian(5, 2).unwrap(), d2.path()).unwrap();
        for f in [MATRIX_FILE, RHS_FILE, META_FILE] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
        }
    }
}
