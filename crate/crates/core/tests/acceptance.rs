//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line and fails on FAIL.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use aspm::analysis::{
    cesaro_bound, hoffman_bruteforce, hoffman_upper_bound, max_violation, momentum_gamma_max, momentum_rate_l1,
    momentum_rate_l2, mu_bounds_for_rule, rate_basic, region_check, sigma_encoding, SpectralConstants,
};
use aspm::cli::main_with_args;
use aspm::io::gen_gaussian;
use aspm::loss::{expected_greedy_from_losses, expected_loss_greedy, grad_b_loss_i, grad_loss_i, loss_i, losses};
use aspm::model::{MetricMatrix, ProblemInstance, SketchSet, SketchedProblem};
use aspm::projection::exact_projection;
use aspm::sampling::{capped_threshold, SamplingRule};
use aspm::solver::{default_start, AspmRun, SolverConfig};

/// Writes to the process stdout handle directly so the line also shows for passing tests.
fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n} ({name}): {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn dist_sq(sys: &SketchedProblem<'_>, x: &DVector<f64>) -> f64 {
    let p = exact_projection(sys.problem, sys.metric, x).unwrap();
    sys.metric.norm_sq(&(x - p)).max(0.0)
}

/// Mean and standard error of each column of `samples[trial][k]`.
fn mean_se(samples: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let trials = samples.len() as f64;
    (0..samples[0].len())
        .map(|k| {
            let mean = samples.iter().map(|s| s[k]).sum::<f64>() / trials;
            let var = samples.iter().map(|s| (s[k] - mean).powi(2)).sum::<f64>() / (trials - 1.0);
            (mean, (var / trials).sqrt())
        })
        .collect()
}

/// Runs `trials` independent trajectories of `steps` iterations and evaluates `f` at `x_0..x_steps`.
fn trajectories(
    sys: SketchedProblem<'_>,
    rule: SamplingRule,
    delta: f64,
    gamma: f64,
    x0: &DVector<f64>,
    trials: usize,
    steps: usize,
    track_cesaro: bool,
    mut f: impl FnMut(&aspm::solver::IterateState) -> f64,
) -> Vec<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let config = SolverConfig { delta, gamma, rule, seed: 2024, stream: t as u64, track_cesaro, ..Default::default() };
            let mut run = AspmRun::new(sys, &config, x0.clone()).unwrap();
            let mut out = vec![f(run.state())];
            for _ in 0..steps {
                run.step().unwrap();
                out.push(f(run.state()));
            }
            out
        })
        .collect()
}

/// Absolute round-off allowance for comparisons whose two sides may coincide exactly.
const ROUNDOFF: f64 = 1e-12;

struct Tiny {
    problem: ProblemInstance,
    metric: MetricMatrix,
    sketches: SketchSet,
    x_int: DVector<f64>,
}

impl Tiny {
    fn new() -> Self {
        let g = gen_gaussian(12, 3, 11).unwrap();
        let metric = MetricMatrix::identity(3);
        let sketches = SketchSet::coordinate(&g.problem, &metric).unwrap();
        Tiny { problem: g.problem, metric, sketches, x_int: g.x_int }
    }

    fn sys(&self) -> SketchedProblem<'_> {
        SketchedProblem::new(&self.problem, &self.metric, &self.sketches).unwrap()
    }

    /// Sampled (brute-force) and certified Hoffman constants.
    fn hoffman(&self) -> (f64, f64) {
        let sampled = hoffman_bruteforce(&self.sys(), 20_000, 5).unwrap();
        let certified = hoffman_upper_bound(&self.problem, &self.metric).unwrap();
        assert!(sampled <= certified * (1.0 + 1e-9), "sampled Hoffman {sampled} exceeds certified {certified}");
        (sampled, certified)
    }

    /// Constants from the brute-force Hoffman estimate, with `mu1` capped at 1.
    fn constants(&self, rule: &SamplingRule) -> SpectralConstants {
        let c = mu_bounds_for_rule(&self.sys(), rule, self.hoffman().0).unwrap();
        SpectralConstants { mu1: c.mu1.min(1.0), ..c }
    }
}

#[test]
fn criterion_01_loss_gradient_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_identity, mut worst_fd, mut fd_checked) = (0.0f64, 0.0f64, 0);
    for tuple in 0..100 {
        let m = rng.random_range(3..10);
        let n = rng.random_range(2..6);
        let g = gen_gaussian(m, n, 100 + tuple).unwrap();
        let metric = match tuple % 3 {
            0 => MetricMatrix::identity(n),
            1 => MetricMatrix::diagonal(DVector::from_fn(n, |_, _| rng.random_range(0.5..3.0))).unwrap(),
            _ => {
                let h = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
                MetricMatrix::dense_spd(h.tr_mul(&h) + DMatrix::identity(n, n)).unwrap()
            }
        };
        let sketches = if tuple % 2 == 0 {
            SketchSet::coordinate(&g.problem, &metric).unwrap()
        } else {
            let q = rng.random_range(2..6);
            let vs = (0..q).map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal).abs())).collect();
            SketchSet::explicit(&g.problem, &metric, vs).unwrap()
        };
        let sys = SketchedProblem::new(&g.problem, &metric, &sketches).unwrap();
        let x = normal_vec(&mut rng, n, 3.0);
        let i = rng.random_range(0..sys.q());

        let f = loss_i(&sys, &x, i).unwrap();
        let gb = grad_b_loss_i(&sys, &x, i).unwrap();
        let half_norm = 0.5 * metric.norm_sq(&gb);
        let rel = (f - half_norm).abs() / f.abs().max(f64::MIN_POSITIVE);
        if f > 0.0 || half_norm > 0.0 {
            worst_identity = worst_identity.max(rel);
        }

        if sys.sketched_residual_at(&x, i) > 0.0 {
            fd_checked += 1;
            let grad = grad_loss_i(&sys, &x, i).unwrap();
            let mut fd = DVector::zeros(n);
            for j in 0..n {
                let h = 1e-6 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                fd[j] = (loss_i(&sys, &xp, i).unwrap() - loss_i(&sys, &xm, i).unwrap()) / (2.0 * h);
            }
            worst_fd = worst_fd.max((grad - fd).norm() / grad_loss_i(&sys, &x, i).unwrap().norm().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_identity <= 1e-10 && worst_fd <= 1e-6 && fd_checked > 0 && secs < 5.0;
    verdict(
        1,
        "loss/gradient identities",
        pass,
        &format!("max rel identity error {worst_identity:.2e}, max FD error {worst_fd:.2e} over {fd_checked} positive cases, {secs:.2}s"),
    );
}

fn enumerate_subsets_mean_max(losses: &[f64], tau: usize) -> f64 {
    let q = losses.len();
    let (mut total, mut count) = (0.0, 0u64);
    for mask in 0u32..(1 << q) {
        if mask.count_ones() as usize != tau {
            continue;
        }
        let max = (0..q).filter(|j| mask & (1 << j) != 0).map(|j| losses[j]).fold(f64::NEG_INFINITY, f64::max);
        total += max;
        count += 1;
    }
    total / count as f64
}

#[test]
fn criterion_02_greedy_expectation_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for q in 2..=8 {
        for rep in 0..5 {
            let mut losses: Vec<f64> = (0..q).map(|_| rng.random_range(0.0..1.0)).collect();
            if rep == 1 {
                losses[0] = losses[1];
            }
            if rep == 2 {
                losses.iter_mut().take(q / 2).for_each(|l| *l = 0.0);
            }
            for tau in 1..=q {
                let expected = enumerate_subsets_mean_max(&losses, tau);
                let got = expected_greedy_from_losses(&losses, tau).unwrap();
                worst = worst.max((got - expected).abs());
                cases += 1;
            }
        }
    }
    // One system-level pass through the loss evaluation.
    let g = gen_gaussian(8, 3, 4).unwrap();
    let metric = MetricMatrix::identity(3);
    let s = SketchSet::coordinate(&g.problem, &metric).unwrap();
    let sys = SketchedProblem::new(&g.problem, &metric, &s).unwrap();
    let x = DVector::from_element(3, 2.0);
    let ls = losses(&sys, &x).unwrap();
    for tau in 1..=8 {
        worst = worst.max((expected_loss_greedy(&sys, &x, tau).unwrap() - enumerate_subsets_mean_max(&ls, tau)).abs());
        cases += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "greedy expectation oracle",
        worst <= 1e-12 && secs < 10.0,
        &format!("max abs error {worst:.2e} over {cases} (q, tau) cases, {secs:.2}s"),
    );
}

#[test]
fn criterion_03_spectral_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = Vec::new();
    let mut max_mu2 = 0.0f64;
    let mut checked = 0;
    for (inst, (m, n)) in [(8, 2), (10, 3), (12, 3), (12, 4)].into_iter().enumerate() {
        let g = gen_gaussian(m, n, 30 + inst as u64).unwrap();
        for metric in [
            MetricMatrix::identity(n),
            MetricMatrix::diagonal(DVector::from_fn(n, |j, _| 1.0 + j as f64)).unwrap(),
        ] {
            let sketches = SketchSet::coordinate(&g.problem, &metric).unwrap();
            let sys = SketchedProblem::new(&g.problem, &metric, &sketches).unwrap();
            let sigma = hoffman_upper_bound(&g.problem, &metric).unwrap();
            let q = sys.q();
            let rules = [
                SamplingRule::Greedy { tau: 1 },
                SamplingRule::Greedy { tau: 2 },
                SamplingRule::Greedy { tau: q / 2 },
                SamplingRule::MaxDistance,
                SamplingRule::Capped { theta: 0.5, tau1: 1, tau2: q, threshold: Default::default() },
                SamplingRule::Capped { theta: 0.2, tau1: 3, tau2: 1, threshold: Default::default() },
            ];
            for rule in rules {
                let c = mu_bounds_for_rule(&sys, &rule, sigma).unwrap();
                max_mu2 = max_mu2.max(c.mu2);
                for _ in 0..100 {
                    let x = &g.x_int + normal_vec(&mut rng, n, 5.0);
                    let d2 = dist_sq(&sys, &x);
                    let ls = losses(&sys, &x).unwrap();
                    let expected = match rule {
                        SamplingRule::Greedy { tau } => expected_greedy_from_losses(&ls, tau).unwrap(),
                        SamplingRule::MaxDistance => expected_greedy_from_losses(&ls, q).unwrap(),
                        SamplingRule::Capped { theta, tau1, tau2, .. } => {
                            let t = capped_threshold(&ls, theta, tau1, tau2).unwrap();
                            let w: Vec<f64> = ls.iter().copied().filter(|l| *l >= t).collect();
                            w.iter().sum::<f64>() / w.len() as f64
                        }
                        SamplingRule::Uniform { .. } => unreachable!(),
                    };
                    let (lo, hi) = (c.mu1 / 2.0 * d2, c.mu2 / 2.0 * d2);
                    checked += 1;
                    if expected < lo - 1e-9 || expected > hi + 1e-9 {
                        violations.push(format!("{rule} at d2 = {d2:.3e}: {lo:.3e} <= {expected:.3e} <= {hi:.3e}"));
                    }
                }
            }
        }
    }
    let pass = violations.is_empty() && max_mu2 <= 1.0;
    verdict(
        3,
        "spectral sandwich",
        pass,
        &format!("{checked} points, {} violations, max mu2 {max_mu2:.6} {:?}", violations.len(), violations.first()),
    );
}

#[test]
fn criterion_04_basic_rate_envelope() {
    let start = Instant::now();
    let tiny = Tiny::new();
    let sys = tiny.sys();
    let x0 = default_start(3);
    let d0_sq = dist_sq(&sys, &x0);
    let (sampled, certified) = tiny.hoffman();
    let mut failures = Vec::new();
    let mut worst_ratio = 0.0f64;
    let mut rates = Vec::new();
    for rule in [SamplingRule::Uniform { weighted: false }, SamplingRule::Greedy { tau: 4 }, SamplingRule::MaxDistance] {
        let c = tiny.constants(&rule);
        for delta in [0.5, 1.0, 1.5] {
            let h = rate_basic(delta, c.mu1).unwrap();
            rates.push(format!("{rule}/{delta}: h {h:.5}"));
            let samples = trajectories(sys, rule, delta, 0.0, &x0, 200, 50, false, |s| dist_sq(&sys, &s.x_curr));
            for (k, (mean, se)) in mean_se(&samples).into_iter().enumerate() {
                let bound = h.powi(k as i32) * d0_sq;
                worst_ratio = worst_ratio.max(mean / (bound + 3.0 * se + ROUNDOFF * d0_sq));
                if mean > bound + 3.0 * se + ROUNDOFF * d0_sq {
                    failures.push(format!("{rule} delta {delta} k {k}: {mean:.4e} > {bound:.4e} + 3 * {se:.2e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "basic rate envelope",
        failures.is_empty() && secs < 60.0,
        &format!(
            "Hoffman sampled {sampled:.4e} certified {certified:.4e}, {}, max mean/envelope {worst_ratio:.4}, {} violations {:?}, {secs:.1}s",
            rates.join(" "),
            failures.len(),
            failures.first()
        ),
    );
}

fn spectral_radius(m: Matrix2<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Points of `R` and `S` with a contracting rate, spread over `delta` and `zeta`.
fn r_and_s_grid(mu1: f64, mu2: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for delta in [0.25, 0.5, 1.0, 1.5] {
        for zeta in [0.01, 0.1, 0.5] {
            let best = [1e-2, 3e-3, 1e-3, 1e-4].into_iter().find(|&gamma| {
                let m = region_check(delta, gamma, Some(zeta), mu1, mu2);
                m.r == Some(true)
                    && m.s == Some(true)
                    && momentum_rate_l2(delta, gamma, zeta, mu1, mu2).is_ok_and(|r| r.rho < 1.0)
            });
            out.extend(best.map(|gamma| (delta, gamma, zeta)));
        }
    }
    out
}

#[test]
fn criterion_05_momentum_envelopes() {
    let tiny = Tiny::new();
    let sys = tiny.sys();
    let rule = SamplingRule::Uniform { weighted: false };
    let c = tiny.constants(&rule);
    let x0 = default_start(3);
    let d0_sq = dist_sq(&sys, &x0);
    let d0 = d0_sq.sqrt();
    let mut failures = Vec::new();
    let mut radius_err = 0.0f64;

    let mut q_points = 0;
    for delta in [0.5, 1.0, 1.5] {
        let gmax = momentum_gamma_max(delta, c.mu1, c.mu2).unwrap();
        for frac in [0.25, 0.5, 0.9] {
            let gamma = frac * gmax;
            let r = momentum_rate_l1(delta, gamma, c.mu1, c.mu2).unwrap();
            let h = rate_basic(delta, c.mu1).unwrap();
            let iteration = Matrix2::new(h.sqrt(), gamma, delta * c.mu2.sqrt(), gamma);
            radius_err = radius_err.max((spectral_radius(iteration) - r.rho2).abs());
            q_points += 1;
            let samples = trajectories(sys, rule, delta, gamma, &x0, 200, 50, false, |s| dist_sq(&sys, &s.x_curr).sqrt());
            for (k, (mean, se)) in mean_se(&samples).into_iter().enumerate() {
                let bound = r.rho2.powi(k as i32) * d0;
                if mean > bound + 3.0 * se + ROUNDOFF * d0 {
                    failures.push(format!("Q delta {delta} gamma {gamma:.3e} k {k}: {mean:.4e} > {bound:.4e}"));
                }
            }
        }
    }

    let picked = r_and_s_grid(c.mu1, c.mu2);
    for &(delta, gamma, zeta) in &picked {
        let r = momentum_rate_l2(delta, gamma, zeta, c.mu1, c.mu2).unwrap();
        let samples = trajectories(sys, rule, delta, gamma, &x0, 200, 50, false, |s| dist_sq(&sys, &s.x_curr));
        for (k, (mean, se)) in mean_se(&samples).into_iter().enumerate() {
            let bound = r.rho.powi(k as i32) * (1.0 + r.alpha) * d0_sq;
            if mean > bound + 3.0 * se + ROUNDOFF * d0_sq {
                failures.push(format!("RS delta {delta} gamma {gamma} zeta {zeta} k {k}: {mean:.4e} > {bound:.4e}"));
            }
        }
    }
    let pass = failures.is_empty() && radius_err <= 1e-10 && q_points >= 6 && picked.len() >= 6;
    verdict(
        5,
        "momentum envelopes",
        pass,
        &format!(
            "{q_points} Q points, {} R∩S points, spectral radius error {radius_err:.2e}, {} violations {:?}",
            picked.len(),
            failures.len(),
            failures.first()
        ),
    );
}

#[test]
fn criterion_06_monotone_distance_to_feasible_points() {
    let tiny = Tiny::new();
    let sys = tiny.sys();
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0usize;
    let mut offending = std::collections::BTreeSet::new();
    let x0 = default_start(3);
    for rule in [SamplingRule::Uniform { weighted: false }, SamplingRule::Greedy { tau: 4 }, SamplingRule::MaxDistance] {
        let c = tiny.constants(&rule);
        let (mu1, mu2) = (c.mu1, c.mu2);
        for delta in [0.5, 1.0, 1.5] {
            let gmax = momentum_gamma_max(delta, mu1, mu2).unwrap();
            for gamma in [0.0, 0.5 * gmax, 0.9 * gmax] {
                let dists = trajectories(sys, rule, delta, gamma, &x0, 50, 100, false, |s| {
                    tiny.metric.norm_sq(&(&s.x_curr - &tiny.x_int)).max(0.0).sqrt()
                });
                for d in dists {
                    for w in d.windows(2) {
                        if w[1] - w[0] > 1e-10 {
                            offending.insert(format!("{rule} delta {delta} gamma/gamma_max {:.2}", gamma / gmax));
                        }
                        worst = worst.max(w[1] - w[0]);
                        steps += 1;
                    }
                }
            }
        }
    }
    verdict(
        6,
        "monotone distance to feasible points",
        worst <= 1e-10,
        &format!("largest increase {worst:.3e} over {steps} steps; settings with an increase above 1e-10: {offending:?}"),
    );
}

#[test]
fn criterion_07_cesaro_bound() {
    let tiny = Tiny::new();
    let sys = tiny.sys();
    let x0 = default_start(3);
    let d0_sq = dist_sq(&sys, &x0);
    let mut failures = Vec::new();
    let mut halving = true;
    for (rule, tau) in [(SamplingRule::Uniform { weighted: false }, 1), (SamplingRule::Greedy { tau: 4 }, 4)] {
        let f = |x: &DVector<f64>| expected_loss_greedy(&sys, x, tau).unwrap();
        let f0 = f(&x0);
        for delta in [0.5, 1.0] {
            for gamma in [0.0, 0.25] {
                assert!(delta < 2.0 * (1.0 - gamma));
                let samples =
                    trajectories(sys, rule, delta, gamma, &x0, 200, 50, true, |s| f(&s.cesaro_x().unwrap()));
                for (k, (mean, se)) in mean_se(&samples).into_iter().enumerate().skip(1) {
                    let bound = cesaro_bound(delta, gamma, k, d0_sq, f0).unwrap();
                    halving &= bound == 2.0 * cesaro_bound(delta, gamma, 2 * k, d0_sq, f0).unwrap();
                    if mean > bound + 3.0 * se {
                        failures.push(format!("{rule} delta {delta} gamma {gamma} k {k}: {mean:.4e} > {bound:.4e}"));
                    }
                }
            }
        }
    }
    verdict(
        7,
        "Cesaro bound",
        failures.is_empty() && halving,
        &format!("{} violations {:?}, exact halving {halving}", failures.len(), failures.first()),
    );
}

fn write_instance(dir: &Path, name: &str, rows: &[&[f64]], b: &[f64]) -> (String, String) {
    let (m, n) = (rows.len(), rows[0].len());
    let mut text = format!("%%MatrixMarket matrix array real general\n{m} {n}\n");
    for j in 0..n {
        for row in rows {
            text.push_str(&format!("{}\n", row[j]));
        }
    }
    let a = dir.join(format!("{name}.mtx"));
    let rhs = dir.join(format!("{name}.txt"));
    fs::write(&a, text).unwrap();
    fs::write(&rhs, b.iter().map(|v| format!("{v}\n")).collect::<String>()).unwrap();
    (a.display().to_string(), rhs.display().to_string())
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["aspm"];
    full.extend_from_slice(args);
    let code = main_with_args(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap() + &String::from_utf8(err).unwrap())
}

#[test]
fn criterion_08_feasibility_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    let mut pass = true;
    for (name, b) in [("identity", [0.0, 0.0]), ("shifted_identity", [-1.0, -2.0])] {
        let (a, rhs) = write_instance(dir.path(), name, &[&[1.0, 0.0], &[0.0, 1.0]], &b);
        for gamma in ["0", "0.1"] {
            let mut hits = 0;
            for seed in 0..100 {
                let seed = seed.to_string();
                let (code, out) =
                    run_cli(&["certify", "--matrix", &a, "--rhs", &rhs, "--gamma", gamma, "--seed", &seed]);
                assert_eq!(code, 0, "{out}");
                let v: serde_json::Value = serde_json::from_str(&out).unwrap();
                let bound = v["iteration_lower_bound"].as_f64().unwrap();
                if let Some(k) = v["achieved_at"].as_u64() {
                    if k as f64 <= bound.ceil() {
                        hits += 1;
                    }
                }
            }
            pass &= hits >= 95;
            summaries.push(format!("{name} gamma {gamma}: {hits}/100"));
        }
    }

    // Infeasible {x <= 0, -x <= -1}: the maximum violation stays above 2^(1 - sigma).
    let infeasible = ProblemInstance::from_dense(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![0.0, -1.0]))
        .unwrap();
    let floor = (1.0 - sigma_encoding(&infeasible)).exp2();
    let metric = MetricMatrix::identity(1);
    let sketches = SketchSet::coordinate(&infeasible, &metric).unwrap();
    let sys = SketchedProblem::new(&infeasible, &metric, &sketches).unwrap();
    let mut min_theta = f64::INFINITY;
    for rule in [SamplingRule::Uniform { weighted: false }, SamplingRule::MaxDistance, SamplingRule::Greedy { tau: 2 }] {
        for (delta, gamma) in [(1.0, 0.0), (0.5, 0.2), (1.5, 0.1)] {
            let thetas = trajectories(sys, rule, delta, gamma, &DVector::zeros(1), 20, 500, false, |s| {
                max_violation(&infeasible, &s.x_curr)
            });
            min_theta = thetas.iter().flatten().copied().fold(min_theta, f64::min);
        }
    }
    pass &= min_theta >= floor;
    summaries.push(format!("infeasible toy: min violation {min_theta:.4} vs floor {floor:.4}"));
    verdict(8, "feasibility certificate", pass, &summaries.join(", "));
}

#[test]
fn criterion_09_end_to_end_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let start = Instant::now();
    let (code, text) = run_cli(&[
        "bench",
        "--generated",
        "gaussian:1000:300:1",
        "--gammas",
        "0,0.3",
        "--trials",
        "10",
        "--tol",
        "1e-5",
        "--max-iters",
        "300000",
        "--log-every",
        "100",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(code, 0, "{text}");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let cells = summary["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    let cell = |rule: &str, gamma: f64| {
        cells.iter().find(|c| c["rule"] == rule && c["gamma"].as_f64() == Some(gamma)).unwrap()
    };

    let mut notes = Vec::new();
    let mut all_tol = true;
    let mut all_fsc = true;
    for c in cells {
        let converged = c["tolerance_hits"].as_u64().unwrap() + c["feasible_hits"].as_u64().unwrap();
        if converged != 10 || !c["error"].is_null() {
            all_tol = false;
            notes.push(format!("{} gamma {}: {} max-iteration stops", c["rule"], c["gamma"], c["max_iter_hits"]));
        }
        if c["min_final_fsc"].as_f64() != Some(1.0) {
            all_fsc = false;
        }
    }
    let fsc_range = cells.iter().filter_map(|c| c["min_final_fsc"].as_f64()).fold((1.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let mut ordering = true;
    for gamma in [0.0, 0.3] {
        // Mean iterations count a max-iteration stop at the budget, a lower bound on its iterations-to-tol.
        let g100 = cell("greedy:100", gamma);
        let uni = cell("uniform", gamma);
        let max = cell("max", gamma);
        let it_g = g100["mean_iters_to_tol"].as_f64().unwrap_or(f64::INFINITY);
        let it_u = uni["mean_iterations"].as_f64().unwrap();
        let t_g = g100["mean_seconds_to_tol"].as_f64().unwrap_or(f64::INFINITY);
        let t_m = max["mean_seconds_to_tol"].as_f64().unwrap_or(f64::INFINITY);
        ordering &= it_g < it_u && t_g < t_m;
        notes.push(format!(
            "gamma {gamma}: greedy:100 {it_g:.0} it vs uniform {it_u:.0} it, {t_g:.3}s vs max {t_m:.3}s"
        ));
    }
    let pass = all_tol && all_fsc && ordering && secs < 600.0;
    verdict(
        9,
        "end-to-end protocol",
        pass,
        &format!(
            "tolerance stops everywhere {all_tol}, final FSC 1.0 everywhere {all_fsc} (min final FSC per cell in [{:.3}, {:.3}]), ordering {ordering}, {secs:.0}s; {}",
            fsc_range.0,
            fsc_range.1,
            notes.join("; ")
        ),
    );
}

/// Drops the named CSV columns.
fn without_columns(csv: &str, drop: &[&str]) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|i| !drop.contains(&header[*i])).collect();
    let pick = |cols: Vec<&str>| keep.iter().map(|&i| cols[i]).collect::<Vec<_>>().join(",");
    std::iter::once(pick(header.clone())).chain(lines.map(|l| pick(l.split(',').collect()))).collect::<Vec<_>>().join("\n")
}

fn without_json_keys(text: &str, drop: &[&str]) -> serde_json::Value {
    fn strip(v: &mut serde_json::Value, drop: &[&str]) {
        match v {
            serde_json::Value::Object(map) => {
                map.retain(|k, _| !drop.contains(&k.as_str()));
                map.values_mut().for_each(|x| strip(x, drop));
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(|x| strip(x, drop)),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    strip(&mut v, drop);
    v
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).display().to_string();
    let (a, rhs) = write_instance(dir.path(), "i2", &[&[1.0, 0.0], &[0.0, 1.0]], &[-1.0, -2.0]);
    let mut mismatches = Vec::new();
    let timing_cols = ["time_s", "mean_seconds_to_tol"];
    let timing_keys = ["elapsed_seconds", "mean_seconds_to_tol"];

    for run in ["1", "2"] {
        for args in [
            vec!["generate", "--kind", "gaussian", "--m", "60", "--n", "8", "--seed", "4", "--out"],
            vec!["generate", "--kind", "pdgaussian", "--n", "6", "--seed", "4", "--out"],
        ] {
            let target = d(&format!("gen_{}_{run}", args[2]));
            let mut full = args.clone();
            full.push(&target);
            assert_eq!(run_cli(&full).0, 0);
        }
    }
    for kind in ["gaussian", "pdgaussian"] {
        let (p1, p2) = (dir.path().join(format!("gen_{kind}_1")), dir.path().join(format!("gen_{kind}_2")));
        for f in files_under(&p1) {
            if fs::read(p1.join(&f)).unwrap() != fs::read(p2.join(&f)).unwrap() {
                mismatches.push(format!("generate {kind} {}", f.display()));
            }
        }
    }

    let inst = d("gen_gaussian_1");
    let mut solve_outputs = Vec::new();
    let mut analyze_outputs = Vec::new();
    let mut certify_outputs = Vec::new();
    let mut bench_dirs = Vec::new();
    for run in ["1", "2"] {
        let s_out = d(&format!("solve_{run}"));
        let (code, text) = run_cli(&[
            "solve", "--instance", &inst, "--rule", "greedy:10", "--gamma", "0.2", "--seed", "9", "--log-every", "5",
            "--no-region-check", "--out", &s_out,
        ]);
        assert_eq!(code, 0, "{text}");
        solve_outputs.push((
            without_columns(&fs::read_to_string(Path::new(&s_out).join("trace.csv")).unwrap(), &timing_cols),
            without_json_keys(&fs::read_to_string(Path::new(&s_out).join("summary.json")).unwrap(), &timing_keys),
        ));
        analyze_outputs.push(run_cli(&["analyze", "--instance", &inst, "--rule", "capped:0.5:1:m", "--gamma", "0.01"]));
        certify_outputs.push(run_cli(&["certify", "--matrix", &a, "--rhs", &rhs, "--seed", "3", "--gamma", "0.1"]));
        let b_out = d(&format!("bench_{run}"));
        let (code, text) = run_cli(&[
            "bench", "--instance", &inst, "--rules", "uniform,greedy:5,max", "--gammas", "0,0.2", "--trials", "3",
            "--seed", "5", "--log-every", "10", "--out", &b_out,
        ]);
        assert_eq!(code, 0, "{text}");
        bench_dirs.push(dir.path().join(format!("bench_{run}")));
    }
    if solve_outputs[0] != solve_outputs[1] {
        mismatches.push("solve".into());
    }
    if analyze_outputs[0] != analyze_outputs[1] || analyze_outputs[0].0 != 0 {
        mismatches.push("analyze".into());
    }
    if certify_outputs[0] != certify_outputs[1] || certify_outputs[0].0 != 0 {
        mismatches.push("certify".into());
    }
    let files = files_under(&bench_dirs[0]);
    if files != files_under(&bench_dirs[1]) {
        mismatches.push("bench file set".into());
    }
    for f in &files {
        let (x, y) = (
            fs::read_to_string(bench_dirs[0].join(f)).unwrap(),
            fs::read_to_string(bench_dirs[1].join(f)).unwrap(),
        );
        let same = if f.extension().is_some_and(|e| e == "json") {
            without_json_keys(&x, &timing_keys) == without_json_keys(&y, &timing_keys)
        } else {
            without_columns(&x, &timing_cols) == without_columns(&y, &timing_cols)
        };
        if !same {
            mismatches.push(format!("bench {}", f.display()));
        }
    }
    verdict(
        10,
        "determinism",
        mismatches.is_empty(),
        &format!("{} bench files compared, mismatches {:?}", files.len(), mismatches),
    );
}
