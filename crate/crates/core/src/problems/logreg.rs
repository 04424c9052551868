use ndarray::{s, Array1, Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::inner::{newton_solve, InnerFailure, InnerSolution, NewtonOptions, SmoothObjective};
use crate::linalg::{norm_inf, norm_l1, norm_sq};
use crate::solver::{Acceptance, SolverConfig, SplitProblem, XSubproblem};
use crate::Scalar;

use super::soft_threshold;

/// ℓ1-regularized logistic regression
///
/// ```text
/// min_{(t, u)} Σ_i log(1 + exp(-d_i (t + <c_i, u>))) + m delta ‖u‖₁
/// ```
///
/// The decision vector is laid out as `x = (t, u)` with the intercept first,
/// so that `<a_i, x>` with `a_i = (1, c_i)` is the margin before the label.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegInstance<T> {
    /// Row `i` is the feature vector `c_i`.
    pub c: Array2<T>,
    /// Labels in `{-1, +1}`.
    pub d: Array1<T>,
    pub delta: T,
}

impl<T: Scalar> LogRegInstance<T> {
    pub fn new(c: Array2<T>, d: Array1<T>, delta: T) -> Result<Self> {
        check_len("labels", c.nrows(), d.len())?;
        validate_labels(d.view())?;
        if !(delta > T::zero()) {
            return Err(Error::Domain(format!("delta must be positive, got {delta}")));
        }
        Ok(Self { c, d, delta })
    }

    /// Uses `delta = 0.5 lambda_max`.
    pub fn with_default_delta(c: Array2<T>, d: Array1<T>) -> Result<Self> {
        let delta = T::lit(0.5) * logreg_lambda_max(&c, d.view())?;
        Self::new(c, d, delta)
    }

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

    /// Weight of the ℓ1 term, `m delta`.
    pub fn l1_weight(&self) -> T {
        T::from_usize(self.m()).unwrap() * self.delta
    }

    /// `<a_i, x>` for every sample.
    fn scores(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut z = self.c.dot(&x.slice(s![1..]));
        z.mapv_inplace(|e| e + x[0]);
        z
    }

    /// `Aᵗ w` for the augmented design `A = [1 | C]`.
    fn design_t(&self, w: ArrayView1<T>) -> Array1<T> {
        let mut out = Array1::zeros(self.n() + 1);
        out[0] = w.sum();
        out.slice_mut(s![1..]).assign(&self.c.t().dot(&w));
        out
    }

    /// Per-sample curvature `sigma(z)(1 - sigma(z))` at the margins.
    fn curvature(&self, x: ArrayView1<T>) -> Array1<T> {
        let z = self.scores(x);
        z.mapv(|e| {
            let p = sigmoid(e);
            p * (T::one() - p)
        })
    }

    /// `f(x) = Σ log(1 + exp(-d_i <a_i, x>))`.
    pub fn loss(&self, x: ArrayView1<T>) -> T {
        let z = self.scores(x);
        z.iter().zip(self.d.iter()).fold(T::zero(), |acc, (&zi, &di)| acc + softplus(-di * zi))
    }

    pub fn loss_gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let z = self.scores(x);
        let w = Array1::from_iter(z.iter().zip(self.d.iter()).map(|(&zi, &di)| -di * sigmoid(-di * zi)));
        self.design_t(w.view())
    }

    pub fn loss_hessian(&self, x: ArrayView1<T>) -> Array2<T> {
        let w = self.curvature(x);
        let n = self.n();
        let mut h = Array2::zeros((n + 1, n + 1));
        let mut weighted = self.c.clone();
        for (mut row, &wi) in weighted.rows_mut().into_iter().zip(w.iter()) {
            row.mapv_inplace(|e| e * wi);
        }
        h.slice_mut(s![1.., 1..]).assign(&self.c.t().dot(&weighted));
        let cross = weighted.sum_axis(ndarray::Axis(0));
        h[[0, 0]] = w.sum();
        h.slice_mut(s![0, 1..]).assign(&cross);
        h.slice_mut(s![1.., 0]).assign(&cross);
        h
    }

    pub fn loss_hessian_vec(&self, x: ArrayView1<T>, p: ArrayView1<T>) -> Array1<T> {
        let w = self.curvature(x);
        let ap = self.scores(p);
        self.design_t((&w * &ap).view())
    }

    pub fn objective(&self, x: ArrayView1<T>) -> T {
        self.loss(x) + self.l1_weight() * norm_l1(x.slice(s![1..]))
    }
}

fn validate_labels<T: Scalar>(d: ArrayView1<T>) -> Result<()> {
    match d.iter().position(|&l| l != T::one() && l != -T::one()) {
        Some(i) => Err(Error::Domain(format!("label {} at sample {i} is not in {{-1, +1}}", d[i]))),
        None => Ok(()),
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// `(1/m) ‖Cᵗ b̄‖∞` with `b̄_i = m⁻/m` for positive and `-m⁺/m` for negative
/// labels: the smallest weight (per sample) for which the all-zero weight
/// vector with optimal intercept is a solution.
pub fn logreg_lambda_max<T: Scalar>(c: &Array2<T>, d: ArrayView1<T>) -> Result<T> {
    check_len("labels", c.nrows(), d.len())?;
    validate_labels(d)?;
    let m = d.len();
    let m_pos = d.iter().filter(|&&l| l == T::one()).count();
    let m_neg = m - m_pos;
    if m_pos == 0 || m_neg == 0 {
        return Err(Error::Domain("lambda_max needs both label classes".into()));
    }
    let mf = T::from_usize(m).unwrap();
    let pos = T::from_usize(m_neg).unwrap() / mf;
    let neg = -T::from_usize(m_pos).unwrap() / mf;
    let b = d.mapv(|l| if l == T::one() { pos } else { neg });
    Ok(norm_inf(c.t().dot(&b).view()) / mf)
}

/// The smooth x-subproblem
/// `h(x) = f(x) + <x, gamma_prev> + beta/2 ‖y_prev - x‖²`.
pub struct LogisticSubproblem<'a, T> {
    pub inst: &'a LogRegInstance<T>,
    pub gamma_prev: ArrayView1<'a, T>,
    pub y_prev: ArrayView1<'a, T>,
    pub beta: T,
}

impl<T: Scalar> SmoothObjective<T> for LogisticSubproblem<'_, T> {
    fn dim(&self) -> usize {
        self.inst.n() + 1
    }

    fn value(&self, x: ArrayView1<T>) -> T {
        let diff = &self.y_prev - &x;
        self.inst.loss(x) + x.dot(&self.gamma_prev) + self.beta / T::lit(2.0) * norm_sq(diff.view())
    }

    fn gradient(&self, x: ArrayView1<T>) -> Array1<T> {
        let mut g = self.inst.loss_gradient(x);
        g += &self.gamma_prev;
        g.scaled_add(self.beta, &x);
        g.scaled_add(-self.beta, &self.y_prev);
        g
    }

    fn hessian(&self, x: ArrayView1<T>) -> Array2<T> {
        let mut h = self.inst.loss_hessian(x);
        for i in 0..h.nrows() {
            h[[i, i]] += self.beta;
        }
        h
    }

    fn hessian_vec(&self, x: ArrayView1<T>, p: ArrayView1<T>) -> Array1<T> {
        let mut out = self.inst.loss_hessian_vec(x, p);
        out.scaled_add(self.beta, &p);
        out
    }
}

/// Logistic regression as `A = -I`, `B = I`, `b = 0` over `x, y ∈ ℝ^{n+1}`.
#[derive(Debug, Clone)]
pub struct LogRegProblem<'a, T> {
    inst: &'a LogRegInstance<T>,
    zero: Array1<T>,
    newton: NewtonOptions,
}

pub fn logreg_problem<'a, T: Scalar>(
    inst: &'a LogRegInstance<T>,
    config: &SolverConfig<T>,
) -> Result<LogRegProblem<'a, T>> {
    config.validate()?;
    Ok(LogRegProblem::new(inst, NewtonOptions::default()))
}

impl<'a, T: Scalar> LogRegProblem<'a, T> {
    pub fn new(inst: &'a LogRegInstance<T>, newton: NewtonOptions) -> Self {
        Self {
            zero: Array1::zeros(inst.n() + 1),
            inst,
            newton,
        }
    }

    pub fn instance(&self) -> &LogRegInstance<T> {
        self.inst
    }

    pub fn objective(&self, x: ArrayView1<T>) -> T {
        self.inst.objective(x)
    }
}

impl<T: Scalar> SplitProblem<T> for LogRegProblem<'_, T> {
    fn x_dim(&self) -> usize {
        self.inst.n() + 1
    }

    fn y_dim(&self) -> usize {
        self.inst.n() + 1
    }

    fn c_dim(&self) -> usize {
        self.inst.n() + 1
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
        let h = LogisticSubproblem {
            inst: self.inst,
            gamma_prev: sub.gamma_prev,
            y_prev: sub.y_prev,
            beta: sub.beta,
        };
        newton_solve(&h, self.zero.view(), |x, g| accept(x, g), max_inner, self.newton)
    }

    fn solve_y(&self, x_tilde: ArrayView1<T>, gamma_prev: ArrayView1<T>, _y_prev: ArrayView1<T>, beta: T) -> Array1<T> {
        let kappa = self.inst.l1_weight() / beta;
        let mut w = &x_tilde + &gamma_prev.mapv(|g| g / beta);
        w.slice_mut(s![1..]).mapv_inplace(|e| soft_threshold(e, kappa));
        w
    }
}
