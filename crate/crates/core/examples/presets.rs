//! The named methods: Kaczmarz variants on a Gaussian system, coordinate descent on a positive definite one.
//!
//! `cargo run --example presets`

use aspm::io::{gen_gaussian, gen_pd_gaussian};
use aspm::model::{ProblemInstance, SketchedProblem};
use aspm::presets::{preset, Preset, PresetParams};
use aspm::solver::{default_start, solve, SolverConfig};

fn run(name: Preset, problem: &ProblemInstance) -> aspm::Result<()> {
    let params = PresetParams { tau: 10, ..Default::default() };
    let bundle = preset(name, problem, &params)?;
    let sys = SketchedProblem::new(problem, &bundle.metric, &bundle.sketches)?;
    let config = SolverConfig { rule: bundle.rule, gamma: 0.2, seed: 1, max_iters: 200_000, ..Default::default() };
    let report = solve(sys, &config, &default_start(problem.n()), None)?;
    println!("{:>8} ({}): {:?} in {} iterations", name.name(), bundle.rule, report.terminated_by, report.iterations);
    Ok(())
}

fn main() -> aspm::Result<()> {
    let gauss = gen_gaussian(150, 15, 2)?;
    for name in [Preset::Mrk, Preset::Mmr, Preset::Mskm, Preset::Mck] {
        run(name, &gauss.problem)?;
    }
    let pd = gen_pd_gaussian(15, 2)?;
    for name in [Preset::Mrcd, Preset::Mmcd, Preset::Mscd, Preset::Mccd] {
        run(name, &pd.problem)?;
    }
    match preset(Preset::Mscd, &gauss.problem, &PresetParams::default()) {
        Err(e) => println!("MSCD on a rectangular matrix: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
