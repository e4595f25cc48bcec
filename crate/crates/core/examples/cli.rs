//! Drives the `aspm` subcommands in-process: generate, solve, analyze, certify and a small bench.
//!
//! `cargo run --example cli`

use aspm::cli::main_with_args;

fn aspm(args: &[&str]) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with_args(std::iter::once("aspm").chain(args.iter().copied()), &mut out, &mut err);
    println!("$ aspm {}  (exit {code})", args.join(" "));
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let inst = dir.path().join("inst").display().to_string();
    let bench = dir.path().join("bench").display().to_string();

    aspm(&["generate", "--kind", "gaussian", "--m", "120", "--n", "10", "--seed", "3", "--out", &inst]);
    aspm(&["solve", "--instance", &inst, "--preset", "MSKM", "--tau", "12", "--gamma", "0.2", "--seed", "1"]);
    aspm(&["analyze", "--generated", "gaussian:10:3:1", "--rule", "greedy:3", "--gamma", "0.001", "--curve-points", "3"]);
    aspm(&["certify", "--generated", "gaussian:8:2:4", "--seed", "2"]);
    aspm(&["bench", "--instance", &inst, "--rules", "uniform,greedy:12,max", "--gammas", "0,0.3", "--trials", "3", "--log-every", "25", "--out", &bench]);
}
