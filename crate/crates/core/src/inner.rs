//! Inexact inner solvers driven by an acceptance callback.
//!
//! Both solvers hand every iterate `x` together with its certificate vector
//! `v` to `accept` exactly once, and stop at the first iterate that is
//! accepted. Neither solver knows anything about the outer ADMM loop; the
//! callback carries the coupling (for PIP-ADMM it recomputes the tentative
//! multiplier and evaluates the hybrid stopping rule).

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};

use crate::linalg::{cholesky, cholesky_solve, dot, norm};
use crate::Scalar;

/// An accepted inner solution.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution<T> {
    pub x_tilde: Array1<T>,
    /// Certificate vector. For CG this is `S x_tilde - rhs`, for Newton the
    /// gradient at `x_tilde`.
    pub v: Array1<T>,
    /// Inner iterations performed (0 when the start point was accepted).
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerFailureReason {
    BudgetExhausted,
    LineSearch,
    /// Non-positive curvature or a singular Newton system.
    Breakdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InnerFailure {
    pub reason: InnerFailureReason,
    pub iterations: usize,
}

impl fmt::Display for InnerFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.reason {
            InnerFailureReason::BudgetExhausted => "iteration budget exhausted",
            InnerFailureReason::LineSearch => "line search found no decrease",
            InnerFailureReason::Breakdown => "breakdown (non-positive curvature)",
        };
        write!(f, "{what} after {} inner iterations", self.iterations)
    }
}

/// Conjugate gradient state for `S x = rhs` with `S` symmetric positive definite.
pub struct CgWorkspace<'a, T, S> {
    apply_s: S,
    rhs: ArrayView1<'a, T>,
    x: Array1<T>,
    /// Classical residual `rhs - S x`.
    r: Array1<T>,
    p: Array1<T>,
    rr: T,
    iterations: usize,
}

/// Recursive residuals are replaced by `rhs - S x` this often.
pub const CG_RESIDUAL_REFRESH: usize = 50;

impl<'a, T, S> CgWorkspace<'a, T, S>
where
    T: Scalar,
    S: Fn(ArrayView1<T>) -> Array1<T>,
{
    pub fn new(apply_s: S, rhs: ArrayView1<'a, T>, x_start: ArrayView1<T>) -> Self {
        let x = x_start.to_owned();
        let r = &rhs - &apply_s(x.view());
        let rr = dot(r.view(), r.view());
        let p = r.clone();
        Self {
            apply_s,
            rhs,
            x,
            r,
            p,
            rr,
            iterations: 0,
        }
    }

    pub fn x(&self) -> ArrayView1<'_, T> {
        self.x.view()
    }

    /// Certificate vector `S x - rhs` (the negated classical residual).
    pub fn certificate(&self) -> Array1<T> {
        self.r.mapv(|e| -e)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// One CG iteration.
    pub fn advance(&mut self) -> Result<(), InnerFailureReason> {
        let sp = (self.apply_s)(self.p.view());
        let curvature = dot(self.p.view(), sp.view());
        if !(curvature > T::zero()) {
            return Err(InnerFailureReason::Breakdown);
        }
        let alpha = self.rr / curvature;
        self.x.scaled_add(alpha, &self.p);
        self.iterations += 1;
        if self.iterations.is_multiple_of(CG_RESIDUAL_REFRESH) {
            self.r = &self.rhs - &(self.apply_s)(self.x.view());
        } else {
            self.r.scaled_add(-alpha, &sp);
        }
        let rr_next = dot(self.r.view(), self.r.view());
        let ratio = rr_next / self.rr;
        self.p.zip_mut_with(&self.r, |p, &r| *p = r + ratio * *p);
        self.rr = rr_next;
        Ok(())
    }
}

/// Runs CG from `x_start` until `accept(x, S x - rhs)` returns true.
pub fn cg_solve<T, S, F>(
    apply_s: S,
    rhs: ArrayView1<T>,
    x_start: ArrayView1<T>,
    mut accept: F,
    max_inner: usize,
) -> Result<InnerSolution<T>, InnerFailure>
where
    T: Scalar,
    S: Fn(ArrayView1<T>) -> Array1<T>,
    F: FnMut(ArrayView1<T>, ArrayView1<T>) -> bool,
{
    let mut ws = CgWorkspace::new(apply_s, rhs, x_start);
    loop {
        let v = ws.certificate();
        if accept(ws.x(), v.view()) {
            return Ok(InnerSolution {
                x_tilde: ws.x,
                v,
                iterations: ws.iterations,
            });
        }
        if ws.iterations >= max_inner {
            return Err(InnerFailure {
                reason: InnerFailureReason::BudgetExhausted,
                iterations: ws.iterations,
            });
        }
        ws.advance().map_err(|reason| InnerFailure {
            reason,
            iterations: ws.iterations,
        })?;
    }
}

/// Smooth strongly convex function minimized by [`newton_solve`].
pub trait SmoothObjective<T: Scalar> {
    fn dim(&self) -> usize;
    fn value(&self, x: ArrayView1<T>) -> T;
    fn gradient(&self, x: ArrayView1<T>) -> Array1<T>;
    fn hessian(&self, x: ArrayView1<T>) -> Array2<T>;

    /// Hessian-vector product, used instead of [`hessian`](Self::hessian) on
    /// large problems.
    fn hessian_vec(&self, x: ArrayView1<T>, p: ArrayView1<T>) -> Array1<T> {
        self.hessian(x).dot(&p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Newton systems up to this dimension use a dense Cholesky factorization,
    /// larger ones CG on Hessian-vector products.
    pub dense_limit: usize,
    pub armijo: f64,
    pub shrink: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            dense_limit: 2000,
            armijo: 1e-4,
            shrink: 0.5,
            max_halvings: 50,
        }
    }
}

/// Damped Newton state.
pub struct NewtonWorkspace<'o, T, O: ?Sized> {
    objective: &'o O,
    options: NewtonOptions,
    x: Array1<T>,
    value: T,
    gradient: Array1<T>,
    iterations: usize,
}

impl<'o, T, O> NewtonWorkspace<'o, T, O>
where
    T: Scalar,
    O: SmoothObjective<T> + ?Sized,
{
    pub fn new(objective: &'o O, x_start: ArrayView1<T>, options: NewtonOptions) -> Self {
        let x = x_start.to_owned();
        let value = objective.value(x.view());
        let gradient = objective.gradient(x.view());
        Self {
            objective,
            options,
            x,
            value,
            gradient,
            iterations: 0,
        }
    }

    pub fn x(&self) -> ArrayView1<'_, T> {
        self.x.view()
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn gradient(&self) -> ArrayView1<'_, T> {
        self.gradient.view()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn direction(&self) -> Result<Array1<T>, InnerFailureReason> {
        let neg_grad = self.gradient.mapv(|g| -g);
        let n = self.objective.dim();
        if n <= self.options.dense_limit {
            let h = self.objective.hessian(self.x.view());
            let l = cholesky(h.view()).ok_or(InnerFailureReason::Breakdown)?;
            Ok(cholesky_solve(l.view(), neg_grad.view()))
        } else {
            let x = self.x.view();
            let target = T::lit(1e-10) * norm(neg_grad.view());
            let zero = Array1::zeros(n);
            let sol = cg_solve(
                |p| self.objective.hessian_vec(x, p),
                neg_grad.view(),
                zero.view(),
                |_, r| norm(r) <= target,
                10 * n,
            )
            .map_err(|f| f.reason)?;
            Ok(sol.x_tilde)
        }
    }

    /// One damped Newton step with Armijo backtracking.
    pub fn advance(&mut self) -> Result<(), InnerFailureReason> {
        let d = self.direction()?;
        let slope = dot(self.gradient.view(), d.view());
        if !(slope < T::zero()) {
            return Err(InnerFailureReason::Breakdown);
        }
        let armijo = T::lit(self.options.armijo);
        let shrink = T::lit(self.options.shrink);
        // Below this the predicted decrease is lost in the rounding of h.
        let rounding = T::lit(64.0) * T::epsilon() * (T::one() + self.value.abs());

        let mut t = T::one();
        for _ in 0..=self.options.max_halvings {
            let trial = &self.x + &d.mapv(|e| e * t);
            let trial_value = self.objective.value(trial.view());
            let sufficient = trial_value <= self.value + armijo * t * slope;
            let unresolvable = t == T::one() && -slope <= rounding && trial_value <= self.value;
            if sufficient || unresolvable {
                let trial_gradient = self.objective.gradient(trial.view());
                if sufficient || norm(trial_gradient.view()) < norm(self.gradient.view()) {
                    self.x = trial;
                    self.value = trial_value;
                    self.gradient = trial_gradient;
                    self.iterations += 1;
                    return Ok(());
                }
            }
            t *= shrink;
        }
        Err(InnerFailureReason::LineSearch)
    }
}

/// Damped Newton from `x_start` until `accept(x, grad h(x))` returns true.
pub fn newton_solve<T, O, F>(
    objective: &O,
    x_start: ArrayView1<T>,
    mut accept: F,
    max_inner: usize,
    options: NewtonOptions,
) -> Result<InnerSolution<T>, InnerFailure>
where
    T: Scalar,
    O: SmoothObjective<T> + ?Sized,
    F: FnMut(ArrayView1<T>, ArrayView1<T>) -> bool,
{
    let mut ws = NewtonWorkspace::new(objective, x_start, options);
    loop {
        if accept(ws.x(), ws.gradient()) {
            return Ok(InnerSolution {
                x_tilde: ws.x,
                v: ws.gradient,
                iterations: ws.iterations,
            });
        }
        if ws.iterations >= max_inner {
            return Err(InnerFailure {
                reason: InnerFailureReason::BudgetExhausted,
                iterations: ws.iterations,
            });
        }
        ws.advance().map_err(|reason| InnerFailure {
            reason,
            iterations: ws.iterations,
        })?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    struct Quadratic {
        q: Array2<f64>,
        c: Array1<f64>,
    }

    impl SmoothObjective<f64> for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn value(&self, x: ArrayView1<f64>) -> f64 {
            0.5 * x.dot(&self.q.dot(&x)) - self.c.dot(&x)
        }
        fn gradient(&self, x: ArrayView1<f64>) -> Array1<f64> {
            self.q.dot(&x) - &self.c
        }
        fn hessian(&self, _x: ArrayView1<f64>) -> Array2<f64> {
            self.q.clone()
        }
    }

    #[test]
    fn cg_accepts_exact_start_without_iterating() {
        let s = array![[2.0, 0.5], [0.5, 1.0]];
        let x0 = array![1.0, -1.0];
        let rhs = s.dot(&x0);
        let sol = cg_solve(|p| s.dot(&p), rhs.view(), x0.view(), |_, v| norm(v) == 0.0, 5).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.x_tilde, x0);
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let rhs = array![1.0, 2.0, -3.0];
        let zero = Array1::zeros(3);
        let sol = cg_solve(|p| p.to_owned(), rhs.view(), zero.view(), |_, v| norm(v) <= 1e-14, 5)
            .unwrap();
        assert_eq!(sol.iterations, 1);
        for i in 0..3 {
            assert!((sol.x_tilde[i] - rhs[i] as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn cg_budget_exhaustion_is_reported() {
        let s = array![[3.0, 1.0], [1.0, 2.0]];
        let rhs = array![1.0, 1.0];
        let zero = Array1::zeros(2);
        let err = cg_solve(|p| s.dot(&p), rhs.view(), zero.view(), |_, _| false, 3).unwrap_err();
        assert_eq!(err.reason, InnerFailureReason::BudgetExhausted);
        assert_eq!(err.iterations, 3);
    }

    #[test]
    fn accept_called_once_per_iterate() {
        let s = array![[3.0, 1.0, 0.0], [1.0, 2.0, 0.3], [0.0, 0.3, 1.5]];
        let rhs = array![1.0, 0.0, -1.0];
        let zero = Array1::zeros(3);
        let mut calls = 0;
        let sol = cg_solve(
            |p| s.dot(&p),
            rhs.view(),
            zero.view(),
            |_, v| {
                calls += 1;
                norm(v) <= 1e-12
            },
            10,
        )
        .unwrap();
        assert_eq!(calls, sol.iterations + 1);
    }

    #[test]
    fn newton_exact_on_quadratic() {
        let q = Quadratic {
            q: array![[4.0, 1.0], [1.0, 3.0]],
            c: array![1.0, 2.0],
        };
        let zero = Array1::zeros(2);
        let sol = newton_solve(&q, zero.view(), |_, g| norm(g) <= 1e-8, 10, NewtonOptions::default())
            .unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(norm(sol.v.view()) < 1e-12);
    }

    #[test]
    fn newton_accepts_minimizer_at_start() {
        let q = Quadratic {
            q: array![[2.0, 0.0], [0.0, 2.0]],
            c: array![2.0, -4.0],
        };
        let start = array![1.0, -2.0];
        let sol = newton_solve(&q, start.view(), |_, g| norm(g) <= 1e-8, 10, NewtonOptions::default())
            .unwrap();
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn newton_cg_path_matches_dense_path() {
        let q = Quadratic {
            q: array![[4.0, 1.0, 0.2], [1.0, 3.0, 0.1], [0.2, 0.1, 2.0]],
            c: array![1.0, 2.0, 3.0],
        };
        let zero = Array1::zeros(3);
        let opts = NewtonOptions {
            dense_limit: 0,
            ..NewtonOptions::default()
        };
        let cg = newton_solve(&q, zero.view(), |_, g| norm(g) <= 1e-9, 10, opts).unwrap();
        let dense =
            newton_solve(&q, zero.view(), |_, g| norm(g) <= 1e-9, 10, NewtonOptions::default()).unwrap();
        for i in 0..3 {
            assert!((cg.x_tilde[i] - dense.x_tilde[i]).abs() < 1e-9);
        }
    }
}
