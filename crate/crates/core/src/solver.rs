//! The PIP-ADMM outer loop.
//!
//! Iteration `k` computes, from `(x, y, gamma)` at `k-1`:
//!
//! 1. an inexact `x_tilde` with certificate `v ∈ ∂f(x_tilde) - Aᵗ gamma_tilde`, where
//!    `gamma_tilde = gamma - beta (A x_tilde + B y - b)`, accepted by the hybrid rule
//!    (relative error test or `‖v‖ <= inner_abs_tol`);
//! 2. `y` as the exact minimizer of
//!    `g(y) - <gamma, B y> + beta/2 ‖A x_tilde + B y - b‖² + 1/2 ‖y - y_prev‖²_H`;
//! 3. `x = x_prev - beta v` and `gamma = gamma_prev - theta beta (A x_tilde + B y - b)`.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::inner::{InnerFailure, InnerSolution};
use crate::linalg::{dot, norm, norm_sq};
use crate::monitor::{MSeminorm, PrimalDual};
use crate::Scalar;

/// Data handed to the x-oracle at iteration `k`.
#[derive(Debug, Clone, Copy)]
pub struct XSubproblem<'a, T> {
    pub x_prev: ArrayView1<'a, T>,
    pub y_prev: ArrayView1<'a, T>,
    pub gamma_prev: ArrayView1<'a, T>,
    pub beta: T,
}

/// Acceptance callback evaluated on every inner iterate `(x_tilde, v)`.
pub type Acceptance<'a, T> = dyn FnMut(ArrayView1<T>, ArrayView1<T>) -> bool + 'a;

/// A structured instance of `min f(x) + g(y) s.t. A x + B y = b`.
///
/// `solve_x` and `solve_y` are the two oracles of the method; the linear maps
/// are only ever applied, never materialized.
pub trait SplitProblem<T: Scalar> {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn c_dim(&self) -> usize;

    fn apply_a(&self, x: ArrayView1<T>) -> Array1<T>;
    fn apply_at(&self, w: ArrayView1<T>) -> Array1<T>;
    fn apply_b(&self, y: ArrayView1<T>) -> Array1<T>;
    fn apply_bt(&self, w: ArrayView1<T>) -> Array1<T>;
    fn offset(&self) -> ArrayView1<'_, T>;

    /// Proximal operator `H` of the y-subproblem; `None` means `H = 0`.
    fn apply_h(&self, _y: ArrayView1<T>) -> Option<Array1<T>> {
        None
    }

    fn has_proximal_term(&self) -> bool {
        self.apply_h(Array1::zeros(self.y_dim()).view()).is_some()
    }

    /// Returns the first inner iterate accepted by `accept`, whose `v` must
    /// satisfy `v ∈ ∂f(x_tilde) - Aᵗ gamma_tilde`.
    fn solve_x(
        &self,
        sub: &XSubproblem<'_, T>,
        accept: &mut Acceptance<'_, T>,
        max_inner: usize,
    ) -> Result<InnerSolution<T>, InnerFailure>;

    /// Exact minimizer of the y-subproblem.
    fn solve_y(
        &self,
        x_tilde: ArrayView1<T>,
        gamma_prev: ArrayView1<T>,
        y_prev: ArrayView1<T>,
        beta: T,
    ) -> Array1<T>;

    /// `A x + B y - b`.
    fn constraint_residual(&self, x: ArrayView1<T>, y: ArrayView1<T>) -> Array1<T> {
        let mut r = self.apply_a(x);
        r += &self.apply_b(y);
        r -= &self.offset();
        r
    }
}

/// Randomized consistency checks on a problem's linear maps: adjoints agree
/// to `1e-10` relative and `H` is positive semidefinite.
pub fn validate_problem<T: Scalar, P: SplitProblem<T> + ?Sized>(problem: &P, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |n: usize| Array1::from_shape_fn(n, |_| T::lit(rng.random_range(-1.0..1.0)));
    let (nx, ny, nc) = (problem.x_dim(), problem.y_dim(), problem.c_dim());
    check_len("offset b", nc, problem.offset().len())?;
    let tol = T::lit(1e-10);
    for _ in 0..3 {
        let (u, w) = (random(nx), random(nc));
        let au = problem.apply_a(u.view());
        check_len("A x", nc, au.len())?;
        let lhs = dot(au.view(), w.view());
        let rhs = dot(u.view(), problem.apply_at(w.view()).view());
        if (lhs - rhs).abs() > tol * (T::one() + lhs.abs().max(rhs.abs())) {
            return Err(Error::InvalidProblem("apply_at is not the adjoint of apply_a".into()));
        }
        let (u, w) = (random(ny), random(nc));
        let bu = problem.apply_b(u.view());
        check_len("B y", nc, bu.len())?;
        let lhs = dot(bu.view(), w.view());
        let rhs = dot(u.view(), problem.apply_bt(w.view()).view());
        if (lhs - rhs).abs() > tol * (T::one() + lhs.abs().max(rhs.abs())) {
            return Err(Error::InvalidProblem("apply_bt is not the adjoint of apply_b".into()));
        }
        let v = random(ny);
        if let Some(hv) = problem.apply_h(v.view()) {
            if dot(hv.view(), v.view()) < -T::lit(1e-12) * norm_sq(v.view()) {
                return Err(Error::InvalidProblem("H is not positive semidefinite".into()));
            }
            let (a, b) = (random(ny), random(ny));
            let ha = problem.apply_h(a.view()).unwrap_or_else(|| Array1::zeros(ny));
            let hb = problem.apply_h(b.view()).unwrap_or_else(|| Array1::zeros(ny));
            let (l, r) = (dot(ha.view(), b.view()), dot(a.view(), hb.view()));
            if (l - r).abs() > tol * (T::one() + l.abs().max(r.abs())) {
                return Err(Error::InvalidProblem("H is not self-adjoint".into()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Partially inexact proximal ADMM with the `(tau1, tau2)` relative test.
    Pip,
    /// Relative-error ADMM: `theta = 1`, `H = 0`, and the acceptance test
    /// `2 beta |<x_tilde - x_prev, v>| + beta² ‖v‖² <= tau1 ‖gamma_tilde - gamma_prev‖²`.
    RelerrBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    pub beta: T,
    pub theta: T,
    pub tau1: T,
    pub tau2: T,
    /// Stop once the M-seminorm of the last displacement is at most this.
    pub outer_tol: T,
    pub max_outer: usize,
    /// Inner iteration budget per outer iteration; `None` means `10 * x_dim`.
    pub max_inner: Option<usize>,
    /// Absolute branch of the hybrid acceptance rule on `‖v‖`.
    pub inner_abs_tol: T,
    pub method: Method,
}

impl<T: Scalar> SolverConfig<T> {
    /// PIP-ADMM with the experimental defaults: `beta = 1`,
    /// `tau1 = default_tau1(theta)`, `tau2 = 1 - 1e-8`, hybrid threshold `1e-8`
    /// and outer tolerance `1e-2`. In `f32`, where `1 - 1e-8` rounds to 1,
    /// `tau2` is the largest value below 1 instead.
    pub fn pip(theta: T) -> Result<Self> {
        let config = Self {
            beta: T::one(),
            theta,
            tau1: default_tau1(theta)?,
            tau2: T::one() - T::lit(1e-8).max(T::epsilon()),
            outer_tol: T::lit(1e-2),
            max_outer: 10_000,
            max_inner: None,
            inner_abs_tol: T::lit(1e-8),
            method: Method::Pip,
        };
        config.validate()?;
        Ok(config)
    }

    /// Exact mode: `tau1 = tau2 = 0`.
    pub fn exact(theta: T) -> Result<Self> {
        let config = Self {
            theta,
            tau1: T::zero(),
            tau2: T::zero(),
            method: Method::Pip,
            ..Self::relerr_baseline()
        };
        config.validate()?;
        Ok(config)
    }

    /// The relative-error ADMM baseline with `tau1 = 0.99`.
    pub fn relerr_baseline() -> Self {
        Self {
            beta: T::one(),
            theta: T::one(),
            tau1: T::lit(0.99),
            tau2: T::zero(),
            outer_tol: T::lit(1e-2),
            max_outer: 10_000,
            max_inner: None,
            inner_abs_tol: T::lit(1e-8),
            method: Method::RelerrBaseline,
        }
    }

    pub fn with_outer_tol(mut self, tol: T) -> Self {
        self.outer_tol = tol;
        self
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn with_beta(mut self, beta: T) -> Self {
        self.beta = beta;
        self
    }

    pub fn inner_budget(&self, x_dim: usize) -> usize {
        self.max_inner.unwrap_or(10 * x_dim.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let unit = |t: T| t >= T::zero() && t < T::one();
        if !(self.beta > T::zero()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !unit(self.tau1) || !unit(self.tau2) {
            return bad(format!("tau1, tau2 must lie in [0, 1), got {}, {}", self.tau1, self.tau2));
        }
        if !(self.theta > T::zero()) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.outer_tol > T::zero()) || !(self.inner_abs_tol >= T::zero()) {
            return bad("tolerances must be positive".into());
        }
        if self.max_outer == 0 || self.max_inner == Some(0) {
            return bad("iteration limits must be positive".into());
        }
        match self.method {
            Method::Pip => {
                let upper = theta_upper_bound(self.tau1)?;
                if self.theta >= upper {
                    return bad(format!(
                        "theta = {} must be below {} for tau1 = {}",
                        self.theta, upper, self.tau1
                    ));
                }
            }
            Method::RelerrBaseline => {
                if self.theta != T::one() {
                    return bad("the relative-error baseline requires theta = 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Upper limit on the stepsize for a given `tau1`:
/// `(1 - 2 tau1 + sqrt((1 - 2 tau1)² + 4 (1 - tau1))) / (2 (1 - tau1))`.
pub fn theta_upper_bound<T: Scalar>(tau1: T) -> Result<T> {
    if !(tau1 >= T::zero() && tau1 < T::one()) {
        return Err(Error::Domain(format!("tau1 = {tau1} is outside [0, 1)")));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let a = one - two * tau1;
    let c = one - tau1;
    Ok((a + (a * a + T::lit(4.0) * c).sqrt()) / (two * c))
}

/// `tau1 = 0.99 (1 + theta - theta²) / (theta (2 - theta))`.
pub fn default_tau1<T: Scalar>(theta: T) -> Result<T> {
    let num = T::one() + theta - theta * theta;
    let den = theta * (T::lit(2.0) - theta);
    if !(theta > T::zero()) || !(den > T::zero()) || !(num > T::zero()) {
        return Err(Error::Domain(format!(
            "default tau1 needs 0 < theta < (1 + sqrt 5)/2, got {theta}"
        )));
    }
    let tau1 = T::lit(0.99) * num / den;
    if tau1 >= T::one() {
        return Err(Error::Domain(format!("default tau1 = {tau1} is not below 1 for theta = {theta}")));
    }
    Ok(tau1)
}

/// `gamma_prev - beta (A x_tilde + B y_prev - b)`.
pub fn gamma_tilde<T: Scalar, P: SplitProblem<T> + ?Sized>(
    problem: &P,
    gamma_prev: ArrayView1<T>,
    x_tilde: ArrayView1<T>,
    y_prev: ArrayView1<T>,
    beta: T,
) -> Result<Array1<T>> {
    check_len("gamma_prev", problem.c_dim(), gamma_prev.len())?;
    check_len("x_tilde", problem.x_dim(), x_tilde.len())?;
    check_len("y_prev", problem.y_dim(), y_prev.len())?;
    Ok(gamma_tilde_unchecked(problem, gamma_prev, x_tilde, y_prev, beta))
}

fn gamma_tilde_unchecked<T: Scalar, P: SplitProblem<T> + ?Sized>(
    problem: &P,
    gamma_prev: ArrayView1<T>,
    x_tilde: ArrayView1<T>,
    y_prev: ArrayView1<T>,
    beta: T,
) -> Array1<T> {
    let r = problem.constraint_residual(x_tilde, y_prev);
    &gamma_prev - &r.mapv(|e| e * beta)
}

/// `‖x_tilde - x_prev + beta v‖² <= tau1 ‖gamma_tilde - gamma_prev‖² + tau2 ‖x_tilde - x_prev‖²`.
#[allow(clippy::too_many_arguments)]
pub fn relative_error_holds<T: Scalar>(
    x_tilde: ArrayView1<T>,
    x_prev: ArrayView1<T>,
    v: ArrayView1<T>,
    gamma_tilde: ArrayView1<T>,
    gamma_prev: ArrayView1<T>,
    beta: T,
    tau1: T,
    tau2: T,
) -> bool {
    let dx = &x_tilde - &x_prev;
    let mut lhs_vec = dx.clone();
    lhs_vec.scaled_add(beta, &v);
    let dg = &gamma_tilde - &gamma_prev;
    norm_sq(lhs_vec.view()) <= tau1 * norm_sq(dg.view()) + tau2 * norm_sq(dx.view())
}

/// `2 beta |<x_tilde - x_prev, v>| + beta² ‖v‖² <= tau1 ‖gamma_tilde - gamma_prev‖²`.
pub fn relerr_baseline_holds<T: Scalar>(
    x_tilde: ArrayView1<T>,
    x_prev: ArrayView1<T>,
    v: ArrayView1<T>,
    gamma_tilde: ArrayView1<T>,
    gamma_prev: ArrayView1<T>,
    beta: T,
    tau1: T,
) -> bool {
    let dx = &x_tilde - &x_prev;
    let dg = &gamma_tilde - &gamma_prev;
    let lhs = T::lit(2.0) * beta * dot(dx.view(), v).abs() + beta * beta * norm_sq(v);
    lhs <= tau1 * norm_sq(dg.view())
}

/// Full state after iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate<T> {
    pub k: usize,
    pub x: Array1<T>,
    pub x_tilde: Array1<T>,
    pub y: Array1<T>,
    pub gamma: Array1<T>,
    pub gamma_tilde: Array1<T>,
    pub v: Array1<T>,
    pub inner_iters: usize,
}

impl<T: Scalar> Iterate<T> {
    /// Iterate `k = 0`; the tilde components coincide with the start point.
    pub fn start(x0: Array1<T>, y0: Array1<T>, gamma0: Array1<T>) -> Self {
        Self {
            k: 0,
            x_tilde: x0.clone(),
            v: Array1::zeros(x0.len()),
            gamma_tilde: gamma0.clone(),
            x: x0,
            y: y0,
            gamma: gamma0,
            inner_iters: 0,
        }
    }

    pub fn zeros<P: SplitProblem<T> + ?Sized>(problem: &P) -> Self {
        Self::start(
            Array1::zeros(problem.x_dim()),
            Array1::zeros(problem.y_dim()),
            Array1::zeros(problem.c_dim()),
        )
    }

    /// `z = (x, y, gamma)`.
    pub fn z(&self) -> PrimalDual<T> {
        PrimalDual::new(self.x.clone(), self.y.clone(), self.gamma.clone())
    }

    /// `z_tilde = (x_tilde, y, gamma_tilde)`.
    pub fn z_tilde(&self) -> PrimalDual<T> {
        PrimalDual::new(self.x_tilde.clone(), self.y.clone(), self.gamma_tilde.clone())
    }
}

/// Hook called after every outer iteration. May return an HPE slack to be
/// recorded in the trace; must not influence the iterates.
pub trait StepObserver<T: Scalar, P: SplitProblem<T> + ?Sized> {
    fn observe(&mut self, problem: &P, prev: &Iterate<T>, curr: &Iterate<T>) -> Result<Option<T>>;
}

/// Accepts the candidate inner iterate under the hybrid rule.
fn hybrid_accepts<T: Scalar, P: SplitProblem<T> + ?Sized>(
    problem: &P,
    config: &SolverConfig<T>,
    sub: &XSubproblem<'_, T>,
    x_tilde: ArrayView1<T>,
    v: ArrayView1<T>,
) -> bool {
    if norm(v) <= config.inner_abs_tol {
        return true;
    }
    let gt = gamma_tilde_unchecked(problem, sub.gamma_prev, x_tilde, sub.y_prev, config.beta);
    match config.method {
        Method::Pip => relative_error_holds(
            x_tilde,
            sub.x_prev,
            v,
            gt.view(),
            sub.gamma_prev,
            config.beta,
            config.tau1,
            config.tau2,
        ),
        Method::RelerrBaseline => {
            relerr_baseline_holds(x_tilde, sub.x_prev, v, gt.view(), sub.gamma_prev, config.beta, config.tau1)
        }
    }
}

/// One outer iteration from `state` (iterate `k-1`) to iterate `k`.
pub fn step<T: Scalar, P: SplitProblem<T> + ?Sized>(
    state: &Iterate<T>,
    problem: &P,
    config: &SolverConfig<T>,
) -> Result<Iterate<T>> {
    check_len("x", problem.x_dim(), state.x.len())?;
    check_len("y", problem.y_dim(), state.y.len())?;
    check_len("gamma", problem.c_dim(), state.gamma.len())?;
    let beta = config.beta;
    let sub = XSubproblem {
        x_prev: state.x.view(),
        y_prev: state.y.view(),
        gamma_prev: state.gamma.view(),
        beta,
    };
    let mut accept = |xt: ArrayView1<T>, v: ArrayView1<T>| hybrid_accepts(problem, config, &sub, xt, v);
    let inner = problem
        .solve_x(&sub, &mut accept, config.inner_budget(problem.x_dim()))
        .map_err(Error::InnerFailure)?;
    check_len("x_tilde", problem.x_dim(), inner.x_tilde.len())?;
    check_len("v", problem.x_dim(), inner.v.len())?;

    let gt = gamma_tilde_unchecked(problem, sub.gamma_prev, inner.x_tilde.view(), sub.y_prev, beta);
    let y = problem.solve_y(inner.x_tilde.view(), sub.gamma_prev, sub.y_prev, beta);
    check_len("y", problem.y_dim(), y.len())?;

    let mut x = state.x.clone();
    x.scaled_add(-beta, &inner.v);
    let residual = problem.constraint_residual(inner.x_tilde.view(), y.view());
    let mut gamma = state.gamma.clone();
    gamma.scaled_add(-config.theta * beta, &residual);

    Ok(Iterate {
        k: state.k + 1,
        x,
        x_tilde: inner.x_tilde,
        y,
        gamma,
        gamma_tilde: gt,
        v: inner.v,
        inner_iters: inner.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InnerFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord<T> {
    pub k: usize,
    pub m_step_norm: T,
    pub inner_iters: usize,
    pub hpe_slack: Option<T>,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub final_iterate: Iterate<T>,
    pub outer_count: usize,
    pub total_inner_count: usize,
    pub trace: Vec<TraceRecord<T>>,
    pub status: SolveStatus,
    /// Set when `status` is `InnerFailure`.
    pub inner_failure: Option<InnerFailure>,
}

impl<T: Scalar> SolveResult<T> {
    pub fn final_step_norm(&self) -> Option<T> {
        self.trace.last().map(|r| r.m_step_norm)
    }

    /// Writes the trace as CSV: `k,m_step_norm,inner_iters,hpe_slack`.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            k: usize,
            m_step_norm: f64,
            inner_iters: usize,
            hpe_slack: Option<f64>,
        }
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.trace {
            w.serialize(Row {
                k: r.k,
                m_step_norm: r.m_step_norm.to_f64_lossy(),
                inner_iters: r.inner_iters,
                hpe_slack: r.hpe_slack.map(Scalar::to_f64_lossy),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

struct NoObserver;

impl<T: Scalar, P: SplitProblem<T> + ?Sized> StepObserver<T, P> for NoObserver {
    fn observe(&mut self, _: &P, _: &Iterate<T>, _: &Iterate<T>) -> Result<Option<T>> {
        Ok(None)
    }
}

/// Runs the method from `start` until the M-seminorm stopping test passes.
pub fn run<T: Scalar, P: SplitProblem<T> + ?Sized>(
    problem: &P,
    config: &SolverConfig<T>,
    start: Iterate<T>,
) -> Result<SolveResult<T>> {
    run_observed(problem, config, start, &mut NoObserver)
}

pub fn run_observed<T, P, O>(
    problem: &P,
    config: &SolverConfig<T>,
    start: Iterate<T>,
    observer: &mut O,
) -> Result<SolveResult<T>>
where
    T: Scalar,
    P: SplitProblem<T> + ?Sized,
    O: StepObserver<T, P> + ?Sized,
{
    config.validate()?;
    if config.method == Method::RelerrBaseline && problem.has_proximal_term() {
        return Err(Error::InvalidConfig(
            "the relative-error baseline requires H = 0".into(),
        ));
    }
    check_len("x0", problem.x_dim(), start.x.len())?;
    check_len("y0", problem.y_dim(), start.y.len())?;
    check_len("gamma0", problem.c_dim(), start.gamma.len())?;

    let metric = MSeminorm::new(problem, config.beta, config.theta);
    let mut state = start;
    let mut trace = Vec::new();
    let mut total_inner = 0;
    let mut status = SolveStatus::MaxIter;
    let mut inner_failure = None;

    for _ in 0..config.max_outer {
        let next = match step(&state, problem, config) {
            Ok(next) => next,
            Err(Error::InnerFailure(f)) => {
                total_inner += f.iterations;
                status = SolveStatus::InnerFailure;
                inner_failure = Some(f);
                break;
            }
            Err(e) => return Err(e),
        };
        let step_norm = metric.norm_of_difference(&state.z(), &next.z())?;
        let hpe_slack = observer.observe(problem, &state, &next)?;
        total_inner += next.inner_iters;
        trace.push(TraceRecord {
            k: next.k,
            m_step_norm: step_norm,
            inner_iters: next.inner_iters,
            hpe_slack,
        });
        state = next;
        if step_norm <= config.outer_tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    Ok(SolveResult {
        outer_count: state.k,
        final_iterate: state,
        total_inner_count: total_inner,
        trace,
        status,
        inner_failure,
    })
}
