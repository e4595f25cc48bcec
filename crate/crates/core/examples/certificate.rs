//! Feasibility certificates: iterate until the maximum violation drops below `2^(1 - sigma)`.
//!
//! `cargo run --example certificate`

use aspm::analysis::{analyze, max_violation, sigma_encoding, AnalysisParams};
use aspm::model::{MetricMatrix, ProblemInstance, SketchSet, SketchedProblem};
use aspm::sampling::SamplingRule;
use aspm::solver::{AspmRun, SolverConfig};
use nalgebra::{DMatrix, DVector};

fn certify(problem: &ProblemInstance, label: &str) -> aspm::Result<()> {
    let metric = MetricMatrix::identity(problem.n());
    let sketches = SketchSet::coordinate(problem, &metric)?;
    let sys = SketchedProblem::new(problem, &metric, &sketches)?;
    let rule = SamplingRule::Uniform { weighted: false };
    let threshold = (1.0 - sigma_encoding(problem)).exp2();
    let budget = analyze(&sys, &rule, &AnalysisParams::default())
        .ok()
        .and_then(|r| r.certificate)
        .map(|c| c.iteration_lower_bound.ceil() as usize)
        .unwrap_or(200);

    let config = SolverConfig { rule, seed: 11, ..Default::default() };
    let mut run = AspmRun::new(sys, &config, DVector::zeros(problem.n()))?;
    for _ in 0..budget {
        if max_violation(problem, &run.state().x_curr) < threshold {
            break;
        }
        run.step()?;
    }
    let theta = max_violation(problem, &run.state().x_curr);
    println!(
        "{label}: threshold {threshold:.4}, budget {budget}, stopped at k = {} with violation {theta:.4} -> {}",
        run.state().k,
        if theta < threshold { "feasible" } else { "no certificate" }
    );
    Ok(())
}

fn main() -> aspm::Result<()> {
    let shifted = ProblemInstance::from_dense(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -2.0]))?;
    certify(&shifted, "x <= (-1, -2)")?;
    let infeasible = ProblemInstance::from_dense(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![0.0, -1.0]))?;
    certify(&infeasible, "x <= 0, x >= 1")?;
    Ok(())
}
