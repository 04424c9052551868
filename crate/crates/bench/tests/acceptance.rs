//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::{array, Array1};
use pipadmm::data::{gen_random_lasso, gen_random_logreg};
use pipadmm::monitor::{d0_estimate, g_matrix, is_psd, min_sigma};
use pipadmm::problems::lasso_problem;
use pipadmm::solver::{run, run_observed, step};
use pipadmm::{
    CertificateMonitor64, CertificateRow, Iterate, LassoInstance64, LassoProblem64, MSeminorm, RandomLassoSpec,
    SolverConfig64,
};
use pipadmm_bench::{run_bench, BenchRow, MethodSpec, ProblemKind, RunSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

type RowCheck = fn(&CertificateRow) -> bool;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct CertifiedRun {
    label: String,
    rows: Vec<CertificateRow>,
}

/// Criterion 1 runs, shared by criteria 2 and 3.
fn certified_runs() -> (Vec<CertifiedRun>, f64) {
    let start = Instant::now();
    let mut runs = Vec::new();
    for seed in 0..3 {
        let inst = gen_random_lasso(&RandomLassoSpec::new(50, 200, seed)).unwrap();
        for theta in [1.0, 1.3, 1.6] {
            let cfg = SolverConfig64::pip(theta).unwrap();
            let p = lasso_problem(&inst, &cfg).unwrap();
            let tight = cfg.with_outer_tol(1e-8).with_max_outer(100_000);
            let reference = run(&p, &tight, Iterate::zeros(&p)).unwrap();
            let metric = MSeminorm::new(&p, cfg.beta, cfg.theta);
            let d0 = d0_estimate(&Iterate::zeros(&p).z(), &reference.final_iterate.z(), &metric).unwrap();
            let mut monitor = CertificateMonitor64::new(&cfg, d0).unwrap();
            run_observed(&p, &cfg, Iterate::zeros(&p), &mut monitor).unwrap();
            runs.push(CertifiedRun {
                label: format!("seed {seed} theta {theta}"),
                rows: monitor.rows().to_vec(),
            });
        }
    }
    (runs, start.elapsed().as_secs_f64())
}

fn first_failure(runs: &[CertifiedRun], bad: impl Fn(&CertificateRow) -> bool) -> Option<String> {
    runs.iter()
        .find_map(|r| r.rows.iter().find(|row| bad(row)).map(|row| format!("{} k={}", r.label, row.k)))
}

fn criterion_1(runs: &[CertifiedRun], secs: f64) -> Outcome {
    let iters: usize = runs.iter().map(|r| r.rows.len()).sum();
    let worst = runs
        .iter()
        .flat_map(|r| &r.rows)
        .map(|row| row.slack / row.slack_scale)
        .fold(f64::INFINITY, f64::min);
    match first_failure(runs, |row| row.slack < -TOL * row.slack_scale) {
        Some(at) => outcome(false, format!("negative HPE slack at {at}")),
        None if secs >= 10.0 => outcome(false, format!("took {secs:.2}s")),
        None => outcome(
            true,
            format!("{} runs, {iters} iterations, min relative slack {worst:.3e}, {secs:.2}s", runs.len()),
        ),
    }
}

fn criterion_2(runs: &[CertifiedRun]) -> Outcome {
    let ratio = runs
        .iter()
        .flat_map(|r| &r.rows)
        .map(|row| row.best_step_norm / row.pointwise_bound)
        .fold(0.0, f64::max);
    match first_failure(runs, |row| row.best_step_norm > row.pointwise_bound + TOL * (1.0 + row.pointwise_bound)) {
        Some(at) => outcome(false, format!("pointwise bound exceeded at {at}")),
        None => outcome(true, format!("max best-step / bound = {ratio:.3e}")),
    }
}

fn criterion_3(runs: &[CertifiedRun]) -> Outcome {
    let checks: [(&str, RowCheck); 4] = [
        ("ergodic residual", |r| r.r_a_norm > r.ergodic_bound + TOL * (1.0 + r.ergodic_bound)),
        ("epsilon bound", |r| r.eps_x + r.eps_y > r.eps_bound + TOL * (1.0 + r.eps_bound)),
        ("negative epsilon", |r| r.eps_x < -TOL || r.eps_y < -TOL),
        ("feasibility gap", |r| r.feasibility_gap > 1e-10 * r.gap_scale),
    ];
    for (name, bad) in checks {
        if let Some(at) = first_failure(runs, bad) {
            return outcome(false, format!("{name} violated at {at}"));
        }
    }
    outcome(true, "residual, epsilon and feasibility checks hold at every k")
}

/// Proximal ADMM with the `1/(2 beta) ‖x - x_prev‖²` term, coded directly.
fn criterion_4() -> Outcome {
    let inst = gen_random_lasso(&RandomLassoSpec::new(30, 60, 0)).unwrap();
    let cfg = SolverConfig64::exact(1.0).unwrap();
    let (beta, theta) = (cfg.beta, cfg.theta);
    let p = LassoProblem64::exact(&inst, beta).unwrap();
    let (m, n) = inst.c.dim();
    let c = DMatrix::from_fn(m, n, |i, j| inst.c[[i, j]]);
    let ctd = c.transpose() * DVector::from_fn(m, |i, _| inst.d[i]);
    let factor = (c.transpose() * &c + DMatrix::identity(n, n) * (beta + 1.0 / beta)).cholesky().unwrap();
    let (mut x, mut y, mut g) = (DVector::zeros(n), DVector::<f64>::zeros(n), DVector::zeros(n));
    let kappa = inst.delta / beta;

    let rel = |a: &Array1<f64>, b: &DVector<f64>| {
        a.iter().zip(b.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / (1.0 + b.norm())
    };
    let mut state = Iterate::zeros(&p);
    let (mut worst_tilde, mut worst_traj) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        state = step(&state, &p, &cfg).unwrap();
        x = factor.solve(&(&ctd - &g + &y * beta + &x / beta));
        y = (&x + &g / beta).map(|w: f64| w.signum() * (w.abs() - kappa).max(0.0));
        g -= (&y - &x) * (theta * beta);

        let xn = state.x.iter().map(|e| e * e).sum::<f64>().sqrt();
        let gap = state.x.iter().zip(&state.x_tilde).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_tilde = worst_tilde.max(gap / (1.0 + xn));
        worst_traj = worst_traj.max(rel(&state.x, &x)).max(rel(&state.y, &y)).max(rel(&state.gamma, &g));
    }
    outcome(
        worst_tilde <= 1e-12 && worst_traj <= 1e-10,
        format!("max ‖x_tilde - x‖ rel {worst_tilde:.2e}, max trajectory diff {worst_traj:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let inst = LassoInstance64::new(array![[1.0]], array![1.0], 0.3).unwrap();
    let cfg = SolverConfig64::pip(1.0).unwrap().with_outer_tol(1e-8);
    let p = lasso_problem(&inst, &cfg).unwrap();
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    let z = &res.final_iterate;
    let exact_cfg = SolverConfig64::exact(1.0).unwrap().with_outer_tol(1e-8);
    let ep = LassoProblem64::exact(&inst, 1.0).unwrap();
    let exact = run(&ep, &exact_cfg, Iterate::zeros(&ep)).unwrap().final_iterate;
    let errs = [
        (z.x_tilde[0] - 0.7).abs(),
        (z.y[0] - 0.7).abs(),
        (exact.x[0] - 0.7).abs(),
        (exact.y[0] - 0.7).abs(),
    ];
    outcome(
        errs.iter().all(|e| *e <= 1e-6),
        format!(
            "defaults: x_tilde {:.9}, y {:.9} (auxiliary x {:.3}); exact mode: x {:.9}, y {:.9}",
            z.x_tilde[0], z.y[0], z.x[0], exact.x[0], exact.y[0]
        ),
    )
}

fn large_instance_rows() -> Vec<BenchRow> {
    let mut spec = RunSpec::random(ProblemKind::Lasso, 900, 3000, 0);
    spec.methods = vec![MethodSpec::relerr(), MethodSpec::pip(1.0), MethodSpec::pip(1.3), MethodSpec::pip(1.6)];
    spec.reps = 3;
    run_bench(&spec).unwrap().rows
}

fn out_of(rows: &[BenchRow], seed: u64, method: &str, theta: f64) -> usize {
    rows.iter().find(|r| r.seed == seed && r.method == method && r.theta == theta).unwrap().out
}

fn criterion_6(rows: &[BenchRow]) -> Outcome {
    let mut trend = 0;
    let mut detail = Vec::new();
    let mut in_range = true;
    for seed in 0..3 {
        let (a, b, c) = (out_of(rows, seed, "pip", 1.0), out_of(rows, seed, "pip", 1.3), out_of(rows, seed, "pip", 1.6));
        trend += usize::from(c < b && b < a);
        in_range &= (15..=45).contains(&a);
        detail.push(format!("seed {seed}: {a}/{b}/{c}"));
    }
    let slowest = rows.iter().map(|r| r.time_s).fold(0.0, f64::max);
    let converged = rows.iter().all(|r| r.status == "converged");
    outcome(
        trend >= 2 && in_range && slowest < 120.0 && converged,
        format!("Out at theta 1/1.3/1.6: {}; trend in {trend}/3; slowest solve {slowest:.2}s", detail.join(", ")),
    )
}

fn criterion_7(rows: &[BenchRow]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for seed in 0..3 {
        let (r, p) = (out_of(rows, seed, "relerr", 1.0), out_of(rows, seed, "pip", 1.0));
        ok &= r.abs_diff(p) <= 2;
        detail.push(format!("seed {seed}: relerr {r} vs pip {p}"));
    }
    outcome(ok, detail.join(", "))
}

fn criterion_8() -> Outcome {
    let s0: f64 = min_sigma(0.0, 0.0, 1.0).unwrap();
    let s1: f64 = min_sigma(0.99, 0.0, 1.0).unwrap();
    let tau1 = 0.061875;
    let s2 = min_sigma(tau1, 0.0, 1.6).unwrap();
    let minimal = is_psd(&g_matrix(s2, tau1, 1.6)) && !is_psd(&g_matrix(s2 - 1e-6, tau1, 1.6));
    outcome(
        (s0 - 0.5).abs() <= 1e-10 && (s1 - 0.995).abs() <= 1e-10 && minimal,
        format!("sigma(0,0,1) = {s0:.12}, sigma(0.99,0,1) = {s1:.12}, sigma(theta 1.6) = {s2:.12}"),
    )
}

fn criterion_9() -> Outcome {
    let inst = gen_random_logreg::<f64>(&RandomLassoSpec::new(30, 10, 0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let x = Array1::from_shape_fn(inst.n() + 1, |_| rng.random_range(-1.5..1.5));
        let g = inst.loss_gradient(x.view());
        let h = inst.loss_hessian(x.view());
        for j in 0..x.len() {
            let shifted = |d: f64| {
                let mut z = x.clone();
                z[j] += d;
                z
            };
            let (gp, gm) = (shifted(1e-6), shifted(-1e-6));
            let fd = (inst.loss(gp.view()) - inst.loss(gm.view())) / 2e-6;
            grad_err = grad_err.max(rel(g[j], fd));
            let (hp, hm) = (shifted(1e-5), shifted(-1e-5));
            let col = (&inst.loss_gradient(hp.view()) - &inst.loss_gradient(hm.view())) / 2e-5;
            for i in 0..x.len() {
                hess_err = hess_err.max(rel(h[[i, j]], col[i]));
            }
        }
    }
    outcome(
        grad_err <= 1e-6 && hess_err <= 1e-5,
        format!("max gradient error {grad_err:.2e}, max Hessian error {hess_err:.2e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut spec = RunSpec::random(ProblemKind::Lasso, 50, 200, 0);
    spec.reps = 3;
    let counts = |rows: Vec<BenchRow>| rows.into_iter().map(|r| (r.out, r.inner)).collect::<Vec<_>>();
    let a = counts(run_bench(&spec).unwrap().rows);
    let b = counts(run_bench(&spec).unwrap().rows);
    let mut logreg = RunSpec::random(ProblemKind::Logreg, 50, 100, 0);
    logreg.reps = 2;
    let c = counts(run_bench(&logreg).unwrap().rows);
    let d = counts(run_bench(&logreg).unwrap().rows);
    outcome(a == b && c == d, format!("{} LASSO and {} logistic rows identical across two runs", a.len(), c.len()))
}

fn main() -> ExitCode {
    let (runs, secs) = certified_runs();
    let rows = large_instance_rows();
    let results = [
        criterion_1(&runs, secs),
        criterion_2(&runs),
        criterion_3(&runs),
        criterion_4(),
        criterion_5(),
        criterion_6(&rows),
        criterion_7(&rows),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    for (i, r) in results.iter().enumerate() {
        println!("criterion {}: {} - {}", i + 1, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    }
    if results.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
