use approx::assert_abs_diff_eq;
use ndarray::{array, Array1, Array2, ArrayView1};
use pipadmm::data::gen_random_lasso;
use pipadmm::monitor::{d0_estimate, MSeminorm};
use pipadmm::problems::{l1_subgradient_violation, lasso_problem, LassoXSolver};
use pipadmm::solver::{
    gamma_tilde, relative_error_holds, relerr_baseline_holds, run, run_observed, step, theta_upper_bound,
    XSubproblem,
};
use pipadmm::{
    CertificateMonitor64, Error, InnerFailureReason, InnerSolution, Iterate, LassoInstance, LassoInstance32,
    LassoInstance64, LassoProblem, Method, RandomLassoSpec, SolveStatus, SolverConfig, SolverConfig32,
    SolverConfig64, SplitProblem,
};
use proptest::prelude::*;

fn one_d() -> LassoInstance64 {
    LassoInstance::new(array![[1.0]], array![1.0], 0.3).unwrap()
}

fn small(seed: u64) -> LassoInstance64 {
    gen_random_lasso(&RandomLassoSpec::new(12, 20, seed).with_sparsity(4)).unwrap()
}

#[test]
fn gamma_tilde_hand_example() {
    let inst = one_d();
    let p = LassoProblem::new(&inst, LassoXSolver::ConjugateGradient);
    let g = gamma_tilde(&p, array![0.0].view(), array![2.0].view(), array![1.0].view(), 1.0).unwrap();
    assert_eq!(g, array![1.0]);
    // A feasible pair leaves the multiplier unchanged.
    let g = gamma_tilde(&p, array![0.4].view(), array![1.5].view(), array![1.5].view(), 2.0).unwrap();
    assert_eq!(g, array![0.4]);
    assert!(matches!(
        gamma_tilde(&p, array![0.0, 1.0].view(), array![2.0].view(), array![1.0].view(), 1.0),
        Err(Error::Shape { .. })
    ));
}

#[test]
fn relative_error_hand_examples() {
    let z = array![0.0];
    assert!(relative_error_holds(z.view(), z.view(), array![1.0].view(), array![2.0].view(), z.view(), 1.0, 0.5, 0.0));
    // Exact v always passes, any other v fails in exact mode.
    let (xt, xp) = (array![1.0, 2.0], array![0.5, 1.0]);
    let exact = (&xp - &xt) / 2.0;
    let g = array![3.0, -1.0];
    assert!(relative_error_holds(xt.view(), xp.view(), exact.view(), g.view(), g.view(), 2.0, 0.0, 0.0));
    let off = &exact + &array![1e-6, 0.0];
    assert!(!relative_error_holds(xt.view(), xp.view(), off.view(), g.view(), array![0.0, 0.0].view(), 2.0, 0.0, 0.0));
}

#[test]
fn baseline_hand_examples() {
    let z = array![0.0];
    assert!(relerr_baseline_holds(z.view(), z.view(), z.view(), z.view(), z.view(), 1.0, 0.99));
    assert!(!relerr_baseline_holds(z.view(), z.view(), array![1.0].view(), array![1.0].view(), z.view(), 1.0, 0.99));
    let accepted_at = (0..60)
        .map(|i| 0.5f64.powi(i))
        .find(|&s| relerr_baseline_holds(z.view(), z.view(), array![s].view(), array![1.0].view(), z.view(), 1.0, 0.99));
    assert!(accepted_at.is_some());
}

#[test]
fn one_dimensional_lasso_converges_to_soft_threshold() {
    let inst = one_d();
    let cfg = SolverConfig64::pip(1.0).unwrap().with_outer_tol(1e-8).with_max_outer(10_000);
    let p = lasso_problem(&inst, &cfg).unwrap();
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert_abs_diff_eq!(res.final_iterate.x_tilde[0], 0.7, epsilon = 1e-6);
    assert_abs_diff_eq!(res.final_iterate.y[0], 0.7, epsilon = 1e-6);
    assert_abs_diff_eq!(res.final_iterate.gamma[0], 0.3, epsilon = 1e-6);
    // CG solves the scalar subproblem exactly, so v = 0 and x never moves.
    assert_eq!(res.final_iterate.x[0], 0.0);

    let cfg = SolverConfig64::exact(1.0).unwrap().with_outer_tol(1e-8).with_max_outer(10_000);
    let p = LassoProblem::exact(&inst, cfg.beta).unwrap();
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    assert_eq!(res.status, SolveStatus::Converged);
    assert_abs_diff_eq!(res.final_iterate.x[0], 0.7, epsilon = 1e-6);
    assert_abs_diff_eq!(res.final_iterate.y[0], 0.7, epsilon = 1e-6);
}

#[test]
fn start_at_saddle_point_converges_in_one_iteration() {
    let inst = one_d();
    // KKT: x = y = 0.7, gradient of the loss is -0.3, so gamma = 0.3.
    let start = Iterate::start(array![0.7], array![0.7], array![0.3]);
    let cfg = SolverConfig64::pip(1.3).unwrap();
    let p = lasso_problem(&inst, &cfg).unwrap();
    let next = step(&start, &p, &cfg).unwrap();
    let metric = MSeminorm::new(&p, cfg.beta, cfg.theta);
    assert!(metric.norm_of_difference(&start.z(), &next.z()).unwrap() < 1e-14);
    let res = run(&p, &cfg, start).unwrap();
    assert_eq!(res.outer_count, 1);
    assert_eq!(res.status, SolveStatus::Converged);
}

#[test]
fn saddle_point_distance_of_one_dimensional_instance() {
    let inst = one_d();
    let cfg = SolverConfig64::pip(1.0).unwrap();
    let p = lasso_problem(&inst, &cfg).unwrap();
    let metric = MSeminorm::new(&p, 1.0, 1.0);
    let zero = Iterate::zeros(&p).z();
    let star = Iterate::start(array![0.7], array![0.7], array![0.3]).z();
    assert_abs_diff_eq!(d0_estimate(&zero, &star, &metric).unwrap(), 0.49 + 0.49 + 0.09, epsilon = 1e-15);
    assert_eq!(d0_estimate(&star, &star, &metric).unwrap(), 0.0);
}

#[test]
fn max_iter_status_when_budget_is_short() {
    let inst = small(1);
    let cfg = SolverConfig64::pip(1.0).unwrap().with_max_outer(3);
    let p = lasso_problem(&inst, &cfg).unwrap();
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    assert_eq!(res.status, SolveStatus::MaxIter);
    assert_eq!(res.outer_count, 3);
    assert_eq!(res.trace.len(), 3);
}

#[test]
fn exhausted_inner_budget_is_reported() {
    let inst = gen_random_lasso(&RandomLassoSpec::new(30, 60, 3)).unwrap();
    // Exact mode asks CG for an exact proximal solution it cannot produce.
    let mut cfg = SolverConfig64::exact(1.0).unwrap();
    cfg.max_inner = Some(2);
    let p = LassoProblem::new(&inst, LassoXSolver::ConjugateGradient);
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    assert_eq!(res.status, SolveStatus::InnerFailure);
    assert_eq!(res.outer_count, 0);
    let failure = res.inner_failure.unwrap();
    assert_eq!(failure.reason, InnerFailureReason::BudgetExhausted);
    assert_eq!(failure.iterations, 2);
    assert_eq!(res.total_inner_count, 2);
}

#[test]
fn config_rejects_theta_at_or_above_bound() {
    let mut cfg = SolverConfig64::pip(1.0).unwrap();
    cfg.theta = theta_upper_bound(cfg.tau1).unwrap();
    assert!(cfg.validate().is_err());
    cfg.theta *= 0.999;
    assert!(cfg.validate().is_ok());
    let inst = one_d();
    let p = LassoProblem::new(&inst, LassoXSolver::ConjugateGradient);
    cfg.theta = 2.0;
    assert!(run(&p, &cfg, Iterate::zeros(&p)).is_err());
}

#[test]
fn monitor_does_not_change_iterates() {
    let inst = small(4);
    let cfg = SolverConfig64::pip(1.3).unwrap();
    let p = lasso_problem(&inst, &cfg).unwrap();
    let plain = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    let mut monitor = CertificateMonitor64::new(&cfg, 10.0).unwrap();
    let observed = run_observed(&p, &cfg, Iterate::zeros(&p), &mut monitor).unwrap();
    assert_eq!(plain.final_iterate.x, observed.final_iterate.x);
    assert_eq!(plain.final_iterate.gamma, observed.final_iterate.gamma);
    assert_eq!(plain.outer_count, observed.outer_count);
    assert!(observed.trace.iter().all(|r| r.hpe_slack.is_some()));
    assert!(plain.trace.iter().all(|r| r.hpe_slack.is_none()));
}

#[test]
fn runs_are_deterministic() {
    let inst = small(8);
    let cfg = SolverConfig64::pip(1.6).unwrap();
    let p = lasso_problem(&inst, &cfg).unwrap();
    let a = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    let b = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    assert_eq!(a.final_iterate, b.final_iterate);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let inst = small(2);
    let cfg = SolverConfig64::pip(1.0).unwrap();
    let p = lasso_problem(&inst, &cfg).unwrap();
    let res = run(&p, &cfg, Iterate::zeros(&p)).unwrap();
    let mut buf = Vec::new();
    res.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,m_step_norm,inner_iters,hpe_slack"));
    assert_eq!(lines.count(), res.outer_count);
}

#[test]
fn single_precision_solve_reaches_the_double_precision_objective() {
    let spec = RandomLassoSpec::new(30, 60, 5);
    let inst64: LassoInstance64 = gen_random_lasso(&spec).unwrap();
    let inst32: LassoInstance32 = gen_random_lasso(&spec).unwrap();
    let cfg64 = SolverConfig64::pip(1.3).unwrap();
    let cfg32 = SolverConfig32::pip(1.3).unwrap();
    let p64 = lasso_problem(&inst64, &cfg64).unwrap();
    let p32 = lasso_problem(&inst32, &cfg32).unwrap();
    let r64 = run(&p64, &cfg64, Iterate::zeros(&p64)).unwrap();
    let r32 = run(&p32, &cfg32, Iterate::zeros(&p32)).unwrap();
    assert_eq!(r32.status, SolveStatus::Converged);
    let f64_obj = p64.objective(r64.final_iterate.y.view());
    let f32_obj = p32.objective(r32.final_iterate.y.view()) as f64;
    assert!((f64_obj - f32_obj).abs() <= 1e-3 * f64_obj);
}

fn random_problem_strategy() -> impl Strategy<Value = (u64, usize, usize, f64, Method)> {
    (
        any::<u64>(),
        3usize..15,
        3usize..25,
        prop_oneof![Just(1.0), Just(1.3), Just(1.6)],
        prop_oneof![Just(Method::Pip), Just(Method::RelerrBaseline)],
    )
}

fn config_for(theta: f64, method: Method) -> SolverConfig64 {
    match method {
        Method::Pip => SolverConfig::pip(theta).unwrap(),
        Method::RelerrBaseline => SolverConfig::relerr_baseline(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iterates_satisfy_update_identities((seed, m, n, theta, method) in random_problem_strategy()) {
        let spec = RandomLassoSpec::new(m, n, seed).with_sparsity(n.min(3));
        let Ok(inst) = gen_random_lasso::<f64>(&spec) else { return Ok(()) };
        let cfg = config_for(theta, method).with_max_outer(40);
        let p = lasso_problem(&inst, &cfg).unwrap();
        let mut state = Iterate::zeros(&p);
        for _ in 0..25 {
            let next = step(&state, &p, &cfg).unwrap();
            // x_k = x_{k-1} - beta v_k
            let expected_x = &state.x - &(cfg.beta * &next.v);
            let dx = &next.x - &expected_x;
            prop_assert!(pipadmm::linalg::norm(dx.view()) <= 1e-12 * (1.0 + pipadmm::linalg::norm(next.x.view())));
            // gamma_tilde recomputed independently: gamma - beta (y_prev - x_tilde)
            let gt = &state.gamma - &(cfg.beta * (&state.y - &next.x_tilde));
            let dg = &gt - &next.gamma_tilde;
            prop_assert!(pipadmm::linalg::norm(dg.view()) <= 1e-12 * (1.0 + pipadmm::linalg::norm(gt.view())));
            // the accepted pair passes the hybrid rule
            let rel = match method {
                Method::Pip => relative_error_holds(
                    next.x_tilde.view(), state.x.view(), next.v.view(), next.gamma_tilde.view(),
                    state.gamma.view(), cfg.beta, cfg.tau1, cfg.tau2,
                ),
                Method::RelerrBaseline => relerr_baseline_holds(
                    next.x_tilde.view(), state.x.view(), next.v.view(), next.gamma_tilde.view(),
                    state.gamma.view(), cfg.beta, cfg.tau1,
                ),
            };
            prop_assert!(rel || pipadmm::linalg::norm(next.v.view()) <= cfg.inner_abs_tol);
            // y optimality: gamma_prev - beta (y - x_tilde) is a subgradient of delta |.|_1 at y
            let s = &state.gamma - &(cfg.beta * (&next.y - &next.x_tilde));
            prop_assert!(l1_subgradient_violation(next.y.view(), s.view(), inst.delta, 0) <= 1e-10 * (1.0 + inst.delta));
            // multiplier update with stepsize theta
            let g = &state.gamma - &(cfg.theta * cfg.beta * (&next.y - &next.x_tilde));
            prop_assert!(pipadmm::linalg::norm((&g - &next.gamma).view()) <= 1e-12 * (1.0 + pipadmm::linalg::norm(g.view())));
            state = next;
        }
    }

    #[test]
    fn shape_mismatched_start_is_rejected(extra in 1usize..4) {
        let inst = one_d();
        let cfg = SolverConfig64::pip(1.0).unwrap();
        let p = lasso_problem(&inst, &cfg).unwrap();
        let bad = Iterate::start(Array1::zeros(1 + extra), Array1::zeros(1), Array1::zeros(1));
        let rejected = matches!(run(&p, &cfg, bad), Err(Error::Shape { .. }));
        prop_assert!(rejected);
    }
}

#[test]
fn baseline_requires_no_proximal_term() {
    struct WithH<'a>(LassoProblem<'a, f64>);
    impl SplitProblem<f64> for WithH<'_> {
        fn x_dim(&self) -> usize {
            self.0.x_dim()
        }
        fn y_dim(&self) -> usize {
            self.0.y_dim()
        }
        fn c_dim(&self) -> usize {
            self.0.c_dim()
        }
        fn apply_a(&self, x: ArrayView1<f64>) -> Array1<f64> {
            self.0.apply_a(x)
        }
        fn apply_at(&self, w: ArrayView1<f64>) -> Array1<f64> {
            self.0.apply_at(w)
        }
        fn apply_b(&self, y: ArrayView1<f64>) -> Array1<f64> {
            self.0.apply_b(y)
        }
        fn apply_bt(&self, w: ArrayView1<f64>) -> Array1<f64> {
            self.0.apply_bt(w)
        }
        fn offset(&self) -> ArrayView1<'_, f64> {
            self.0.offset()
        }
        fn apply_h(&self, y: ArrayView1<f64>) -> Option<Array1<f64>> {
            Some(y.to_owned())
        }
        fn solve_x(
            &self,
            sub: &XSubproblem<'_, f64>,
            accept: &mut pipadmm::solver::Acceptance<'_, f64>,
            max_inner: usize,
        ) -> Result<InnerSolution<f64>, pipadmm::InnerFailure> {
            self.0.solve_x(sub, accept, max_inner)
        }
        fn solve_y(&self, x: ArrayView1<f64>, g: ArrayView1<f64>, y: ArrayView1<f64>, beta: f64) -> Array1<f64> {
            self.0.solve_y(x, g, y, beta)
        }
    }
    let inst = LassoInstance::new(Array2::eye(2), array![1.0, -1.0], 0.1).unwrap();
    let p = WithH(LassoProblem::new(&inst, LassoXSolver::ConjugateGradient));
    let cfg = SolverConfig64::relerr_baseline();
    assert!(matches!(run(&p, &cfg, Iterate::zeros(&p)), Err(Error::InvalidConfig(_))));
}
