//! Solve a random feasibility problem with greedy sampling and heavy-ball momentum.
//!
//! `cargo run --example solve`

use aspm::io::gen_gaussian;
use aspm::model::{MetricMatrix, SketchSet, SketchedProblem};
use aspm::sampling::SamplingRule;
use aspm::solver::{default_start, solve, SolverConfig};

fn main() -> aspm::Result<()> {
    let inst = gen_gaussian(200, 20, 7)?;
    let metric = MetricMatrix::identity(20);
    let sketches = SketchSet::coordinate(&inst.problem, &metric)?;
    let sys = SketchedProblem::new(&inst.problem, &metric, &sketches)?;

    for gamma in [0.0, 0.3] {
        let config = SolverConfig {
            rule: SamplingRule::Greedy { tau: 20 },
            delta: 1.0,
            gamma,
            seed: 7,
            max_iters: 100_000,
            residual_tol: 1e-5,
            log_every: 50,
            ..Default::default()
        };
        let x0 = default_start(20);
        let report = solve(sys, &config, &x0, Some(&inst.x_int))?;
        println!(
            "gamma {gamma}: {:?} after {} iterations, residual {:.3e}, fsc {}",
            report.terminated_by, report.iterations, report.final_residual, report.final_fsc
        );
        for rec in report.trace.iter().step_by(2).take(4) {
            println!("  iter {:>5}  residual {:.3e}  rel. error {:.3e}", rec.iter, rec.positive_residual, rec.relative_error.unwrap_or(f64::NAN));
        }
    }
    Ok(())
}
