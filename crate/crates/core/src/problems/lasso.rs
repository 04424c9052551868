use ndarray::{Array1, Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::inner::{cg_solve, InnerFailure, InnerFailureReason, InnerSolution};
use crate::linalg::{cholesky, cholesky_solve, norm_inf, norm_l1, norm_sq};
use crate::solver::{Acceptance, SolverConfig, SplitProblem, XSubproblem};
use crate::Scalar;

use super::soft_threshold;

/// `min ½‖C x - d‖² + delta ‖x‖₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoInstance<T> {
    pub c: Array2<T>,
    pub d: Array1<T>,
    pub delta: T,
}

impl<T: Scalar> LassoInstance<T> {
    pub fn new(c: Array2<T>, d: Array1<T>, delta: T) -> Result<Self> {
        check_len("d", c.nrows(), d.len())?;
        if !(delta > T::zero()) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { c, d, delta })
    }

    /// Uses `delta = 0.1 ‖Cᵗd‖∞`.
    pub fn with_default_delta(c: Array2<T>, d: Array1<T>) -> Result<Self> {
        let delta = lasso_delta(&c, d.view())?;
        Self::new(c, d, delta)
    }

    /// Features become `C`, labels become `d`.
    pub fn from_dataset(ds: &Dataset<T>) -> Result<Self> {
        let d = ds
            .labels
            .clone()
            .ok_or_else(|| Error::DegenerateInstance(format!("dataset {} has no labels", ds.name)))?;
        Self::with_default_delta(ds.features.clone(), d)
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.ncols()
    }

    /// `½‖C x - d‖²`.
    pub fn loss(&self, x: ArrayView1<T>) -> T {
        let r = &self.c.dot(&x) - &self.d;
        norm_sq(r.view()) / T::lit(2.0)
    }

    /// `Cᵗ(C x - d)`.
    pub fn loss_gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let r = &self.c.dot(&x) - &self.d;
        self.c.t().dot(&r)
    }

    pub fn objective(&self, x: ArrayView1<T>) -> T {
        self.loss(x) + self.delta * norm_l1(x)
    }
}

/// `delta = 0.1 ‖Cᵗd‖∞`.
pub fn lasso_delta<T: Scalar>(c: &Array2<T>, d: ArrayView1<T>) -> Result<T> {
    check_len("d", c.nrows(), d.len())?;
    let ctd = norm_inf(c.t().dot(&d).view());
    if !(ctd > T::zero()) {
        return Err(Error::DegenerateInstance("Cᵗd = 0, x = 0 is optimal".into()));
    }
    Ok(T::lit(0.1) * ctd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LassoXSolver {
    /// CG on `(CᵗC + beta I) x = Cᵗd + beta y_prev - gamma_prev`, started at
    /// the right-hand side.
    ConjugateGradient,
    /// Exact solve of the x-subproblem with the extra `1/(2 beta) ‖x - x_prev‖²`
    /// term, returning `v = (x_prev - x_tilde) / beta`. Meant for `tau1 = tau2 = 0`.
    DirectProximal,
}

/// LASSO as `f(x) = ½‖Cx - d‖²`, `g(y) = delta ‖y‖₁`, `A = -I`, `B = I`, `b = 0`.
#[derive(Debug, Clone)]
pub struct LassoProblem<'a, T> {
    inst: &'a LassoInstance<T>,
    ctd: Array1<T>,
    zero: Array1<T>,
    x_solver: LassoXSolver,
    /// Cholesky factor of `CᵗC + (beta + 1/beta) I` and the beta it was built for.
    direct: Option<(T, Array2<T>)>,
}

/// CG-backed LASSO adapter.
pub fn lasso_problem<'a, T: Scalar>(inst: &'a LassoInstance<T>, config: &SolverConfig<T>) -> Result<LassoProblem<'a, T>> {
    config.validate()?;
    Ok(LassoProblem::new(inst, LassoXSolver::ConjugateGradient))
}

impl<'a, T: Scalar> LassoProblem<'a, T> {
    pub fn new(inst: &'a LassoInstance<T>, x_solver: LassoXSolver) -> Self {
        Self {
            ctd: inst.c.t().dot(&inst.d),
            zero: Array1::zeros(inst.n()),
            inst,
            x_solver,
            direct: None,
        }
    }

    /// Direct exact-mode adapter with the factorization prepared for `beta`.
    pub fn exact(inst: &'a LassoInstance<T>, beta: T) -> Result<Self> {
        let mut p = Self::new(inst, LassoXSolver::DirectProximal);
        p.direct = Some((beta, Self::factor(inst, beta)?));
        Ok(p)
    }

    fn factor(inst: &LassoInstance<T>, beta: T) -> Result<Array2<T>> {
        let mut gram = inst.c.t().dot(&inst.c);
        let shift = beta + T::one() / beta;
        for i in 0..gram.nrows() {
            gram[[i, i]] += shift;
        }
        cholesky(gram.view()).ok_or_else(|| Error::InvalidProblem("proximal Gram matrix not SPD".into()))
    }

    pub fn instance(&self) -> &LassoInstance<T> {
        self.inst
    }

    pub fn x_solver(&self) -> LassoXSolver {
        self.x_solver
    }

    /// `(CᵗC + beta I) p`, with `CᵗC` never formed.
    pub fn apply_system(&self, p: ArrayView1<T>, beta: T) -> Array1<T> {
        let cp = self.inst.c.dot(&p);
        let mut out = self.inst.c.t().dot(&cp);
        out.scaled_add(beta, &p);
        out
    }

    /// `Cᵗd + beta y_prev - gamma_prev`.
    pub fn system_rhs(&self, sub: &XSubproblem<'_, T>) -> Array1<T> {
        let mut rhs = self.ctd.clone();
        rhs.scaled_add(sub.beta, &sub.y_prev);
        rhs -= &sub.gamma_prev;
        rhs
    }

    pub fn objective(&self, x: ArrayView1<T>) -> T {
        self.inst.objective(x)
    }
}

impl<T: Scalar> SplitProblem<T> for LassoProblem<'_, T> {
    fn x_dim(&self) -> usize {
        self.inst.n()
    }

    fn y_dim(&self) -> usize {
        self.inst.n()
    }

    fn c_dim(&self) -> usize {
        self.inst.n()
    }

    fn apply_a(&self, x: ArrayView1<T>) -> Array1<T> {
        x.mapv(|e| -e)
    }

    fn apply_at(&self, w: ArrayView1<T>) -> Array1<T> {
        w.mapv(|e| -e)
    }

    fn apply_b(&self, y: ArrayView1<T>) -> Array1<T> {
        y.to_owned()
    }

    fn apply_bt(&self, w: ArrayView1<T>) -> Array1<T> {
        w.to_owned()
    }

    fn offset(&self) -> ArrayView1<'_, T> {
        self.zero.view()
    }

    fn constraint_residual(&self, x: ArrayView1<T>, y: ArrayView1<T>) -> Array1<T> {
        &y - &x
    }

    fn solve_x(
        &self,
        sub: &XSubproblem<'_, T>,
        accept: &mut Acceptance<'_, T>,
        max_inner: usize,
    ) -> Result<InnerSolution<T>, InnerFailure> {
        let rhs = self.system_rhs(sub);
        match self.x_solver {
            LassoXSolver::ConjugateGradient => cg_solve(
                |p| self.apply_system(p, sub.beta),
                rhs.view(),
                rhs.view(),
                |x, v| accept(x, v),
                max_inner,
            ),
            LassoXSolver::DirectProximal => {
                let breakdown = InnerFailure {
                    reason: InnerFailureReason::Breakdown,
                    iterations: 0,
                };
                let fresh;
                let factor = match &self.direct {
                    Some((b, l)) if *b == sub.beta => l,
                    _ => {
                        fresh = Self::factor(self.inst, sub.beta).map_err(|_| breakdown)?;
                        &fresh
                    }
                };
                let mut prox_rhs = rhs;
                prox_rhs.scaled_add(T::one() / sub.beta, &sub.x_prev);
                let x_tilde = cholesky_solve(factor.view(), prox_rhs.view());
                let v = (&sub.x_prev - &x_tilde).mapv(|e| e / sub.beta);
                if accept(x_tilde.view(), v.view()) {
                    Ok(InnerSolution { x_tilde, v, iterations: 1 })
                } else {
                    Err(InnerFailure {
                        reason: InnerFailureReason::BudgetExhausted,
                        iterations: 1,
                    })
                }
            }
        }
    }

    fn solve_y(&self, x_tilde: ArrayView1<T>, gamma_prev: ArrayView1<T>, _y_prev: ArrayView1<T>, beta: T) -> Array1<T> {
        let kappa = self.inst.delta / beta;
        let mut w = x_tilde.to_owned();
        w.zip_mut_with(&gamma_prev, |a, &g| *a = soft_threshold(*a + g / beta, kappa));
        w
    }
}
