//! Spectral constants, convergence rates and admissible momentum for a small system.
//!
//! `cargo run --example analysis`

use aspm::analysis::{analyze, cesaro_bound, momentum_gamma_max, region_check, AnalysisParams};
use aspm::io::gen_gaussian;
use aspm::model::{MetricMatrix, SketchSet, SketchedProblem};
use aspm::sampling::SamplingRule;

fn main() -> aspm::Result<()> {
    let inst = gen_gaussian(10, 3, 5)?;
    let metric = MetricMatrix::identity(3);
    let sketches = SketchSet::coordinate(&inst.problem, &metric)?;
    let sys = SketchedProblem::new(&inst.problem, &metric, &sketches)?;

    for rule in [SamplingRule::Uniform { weighted: false }, SamplingRule::Greedy { tau: 5 }, SamplingRule::MaxDistance] {
        let params = AnalysisParams { gamma: 0.0, zeta: Some(0.1), ..Default::default() };
        let r = analyze(&sys, &rule, &params)?;
        println!(
            "{:<10} sigma {:.3e} ({:?})  mu1 {:.3e}  mu2 {:.4}  h {:.6}  gamma_max {:.3e}",
            r.rule, r.hoffman_sigma, r.hoffman_source, r.mu1, r.mu2, r.h, r.gamma_max
        );
    }

    // A hand-picked pair of constants makes the momentum regions easier to see.
    let (mu1, mu2) = (0.2, 0.5);
    for delta in [0.5, 1.0, 1.5] {
        let gmax = momentum_gamma_max(delta, mu1, mu2)?;
        let inside = region_check(delta, 0.5 * gmax, None, mu1, mu2);
        let outside = region_check(delta, 1.5 * gmax, None, mu1, mu2);
        println!("delta {delta}: gamma_max {gmax:.4}; half of it in Q: {}, 1.5x: {} {:?}", inside.q, outside.q, outside.violated);
    }
    println!("Cesaro bound at k = 100: {:.4e}", cesaro_bound(1.0, 0.25, 100, 4.0, 1.0)?);
    Ok(())
}
