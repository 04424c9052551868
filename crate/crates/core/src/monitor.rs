//! Runtime certificates for PIP-ADMM.
//!
//! The method is an instance of a modified hybrid proximal extragradient
//! (HPE) scheme on `z = (x, y, gamma)` with the block-diagonal metric
//!
//! ```text
//! M = diag(I / beta,  H + beta BᵗB,  I / (theta beta))
//! ```
//!
//! Each iteration must satisfy
//! `‖z_tilde_k - z_k‖²_M + eta_k <= sigma ‖z_tilde_k - z_{k-1}‖²_M + eta_{k-1}`,
//! which in turn yields the pointwise `O(1/sqrt k)` and ergodic `O(1/k)`
//! bounds. Everything here is read-only with respect to the solver: the
//! monitor observes iterates and reports how much room each inequality has.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, norm, norm_sq};
use crate::solver::{Iterate, SolverConfig, SplitProblem, StepObserver};
use crate::Scalar;

/// A point `(x, y, gamma)` of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDual<T> {
    pub x: Array1<T>,
    pub y: Array1<T>,
    pub gamma: Array1<T>,
}

impl<T: Scalar> PrimalDual<T> {
    pub fn new(x: Array1<T>, y: Array1<T>, gamma: Array1<T>) -> Self {
        Self { x, y, gamma }
    }

    pub fn zeros(nx: usize, ny: usize, nc: usize) -> Self {
        Self::new(Array1::zeros(nx), Array1::zeros(ny), Array1::zeros(nc))
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self::new(&self.x - &other.x, &self.y - &other.y, &self.gamma - &other.gamma)
    }
}

/// The seminorm induced by `M`.
pub struct MSeminorm<'a, T, P: ?Sized> {
    problem: &'a P,
    beta: T,
    theta: T,
}

impl<'a, T: Scalar, P: SplitProblem<T> + ?Sized> MSeminorm<'a, T, P> {
    pub fn new(problem: &'a P, beta: T, theta: T) -> Self {
        Self { problem, beta, theta }
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// `(H + beta BᵗB) y`.
    pub fn y_block(&self, y: ArrayView1<T>) -> Array1<T> {
        let mut out = self.problem.apply_bt(self.problem.apply_b(y).view());
        out.mapv_inplace(|e| e * self.beta);
        if let Some(hy) = self.problem.apply_h(y) {
            out += &hy;
        }
        out
    }

    /// `⟨M z, z⟩`, clamped at zero; errors if it is negative beyond rounding.
    pub fn squared(&self, z: &PrimalDual<T>) -> Result<T> {
        check_len("z.x", self.problem.x_dim(), z.x.len())?;
        check_len("z.y", self.problem.y_dim(), z.y.len())?;
        check_len("z.gamma", self.problem.c_dim(), z.gamma.len())?;
        let xs = norm_sq(z.x.view()) / self.beta;
        let ys = dot(self.y_block(z.y.view()).view(), z.y.view());
        let gs = norm_sq(z.gamma.view()) / (self.theta * self.beta);
        if ys < -T::lit(1e-12) * (T::one() + norm_sq(z.y.view())) {
            return Err(Error::Certificate(format!(
                "<(H + beta BᵗB) y, y> = {ys} is negative; H or B is inconsistent"
            )));
        }
        Ok(xs + ys.max(T::zero()) + gs)
    }

    pub fn norm(&self, z: &PrimalDual<T>) -> Result<T> {
        self.squared(z).map(|s| s.sqrt())
    }

    pub fn norm_of_difference(&self, a: &PrimalDual<T>, b: &PrimalDual<T>) -> Result<T> {
        self.norm(&a.difference(b))
    }
}

/// Free-function form of [`MSeminorm::norm`].
pub fn m_seminorm<T: Scalar, P: SplitProblem<T> + ?Sized>(z: &PrimalDual<T>, metric: &MSeminorm<'_, T, P>) -> Result<T> {
    metric.norm(z)
}

/// The 2×2 matrix whose positive semidefiniteness certifies `sigma`.
pub fn g_matrix<T: Scalar>(sigma: T, tau1: T, theta: T) -> [[T; 2]; 2] {
    let one = T::one();
    let two = T::lit(2.0);
    let g11 = sigma - one + (sigma - tau1) * theta;
    let g12 = (one - theta) * (sigma - one + (one - tau1) * theta);
    let g22 = sigma - one + (two - theta - tau1) * theta;
    [[g11, g12], [g12, g22]]
}

pub fn is_psd<T: Scalar>(g: &[[T; 2]; 2]) -> bool {
    g[0][0] >= T::zero() && g[1][1] >= T::zero() && g[0][0] * g[1][1] - g[0][1] * g[1][0] >= T::zero()
}

/// Smallest `sigma` in `[max(tau2, 0), 1)` making [`g_matrix`] PSD, by
/// bisection to `1e-12`.
///
/// `G(sigma)` moves along a positive definite direction as `sigma` grows, so
/// the feasible set is an interval `[sigma_hat, 1]` and bisection is exact up
/// to the tolerance. The returned value always passes [`is_psd`].
pub fn min_sigma<T: Scalar>(tau1: T, tau2: T, theta: T) -> Result<T> {
    let unit = |t: T| t >= T::zero() && t < T::one();
    if !unit(tau1) || !unit(tau2) {
        return Err(Error::Domain(format!("tau1, tau2 must lie in [0, 1), got {tau1}, {tau2}")));
    }
    if !(theta > T::zero()) || theta >= crate::solver::theta_upper_bound(tau1)? {
        return Err(Error::Domain(format!("theta = {theta} is outside the admissible range for tau1 = {tau1}")));
    }
    let psd = |s: T| is_psd(&g_matrix(s, tau1, theta));
    let floor = tau2.max(T::zero());
    if psd(floor) {
        return Ok(floor);
    }
    if !psd(T::one()) {
        return Err(Error::Certificate("G(1) is not positive semidefinite".into()));
    }
    let (mut lo, mut hi) = (floor, T::one());
    let tol = T::lit(1e-12);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if psd(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi >= T::one() {
        return Err(Error::Certificate("no sigma below 1 makes G positive semidefinite".into()));
    }
    Ok(hi)
}

/// `mu = 4 [sigma - 1 + (1 - tau1) theta] / theta^{3/2} * max(1, theta / (2 - theta))`
/// and `eta0 = mu d0`.
pub fn mu_and_eta0<T: Scalar>(sigma: T, tau1: T, theta: T, d0_estimate: T) -> Result<(T, T)> {
    let one = T::one();
    let bracket = sigma - one + (one - tau1) * theta;
    let factor = one.max(theta / (T::lit(2.0) - theta));
    let mu = T::lit(4.0) * bracket / theta.powf(T::lit(1.5)) * factor;
    if mu < -T::lit(1e-12) {
        return Err(Error::Certificate(format!("mu = {mu} is negative")));
    }
    let mu = mu.max(T::zero());
    Ok((mu, mu * d0_estimate))
}

/// `eta_k = [sigma - 1 + (2 - theta - tau1) theta] / (beta theta³) ‖Δgamma‖²
///        + [sigma - 1 + (1 - tau1) theta] / theta ‖Δy‖²_H`.
#[allow(clippy::too_many_arguments)]
pub fn eta_k<T: Scalar, P: SplitProblem<T> + ?Sized>(
    problem: &P,
    gamma_diff: ArrayView1<T>,
    y_diff: ArrayView1<T>,
    sigma: T,
    tau1: T,
    theta: T,
    beta: T,
) -> Result<T> {
    let one = T::one();
    let c_gamma = sigma - one + (T::lit(2.0) - theta - tau1) * theta;
    let c_h = sigma - one + (one - tau1) * theta;
    let floor = -T::lit(1e-12);
    if c_gamma < floor || c_h < floor {
        return Err(Error::Certificate(format!(
            "eta coefficients must be nonnegative, got {c_gamma} and {c_h}"
        )));
    }
    let gamma_term = c_gamma.max(T::zero()) / (beta * theta.powi(3)) * norm_sq(gamma_diff);
    let h_term = match problem.apply_h(y_diff) {
        Some(hy) => c_h.max(T::zero()) / theta * dot(hy.view(), y_diff).max(T::zero()),
        None => T::zero(),
    };
    Ok(gamma_term + h_term)
}

/// The HPE contraction inequality at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpeCertificate<T> {
    pub sigma: T,
    pub eta_prev: T,
    pub eta_curr: T,
    /// `sigma ‖z_tilde - z_prev‖²_M + eta_prev - ‖z_tilde - z‖²_M - eta_curr`.
    pub slack: T,
    /// `1 + sigma ‖z_tilde - z_prev‖²_M + eta_prev`, the magnitude the slack is
    /// compared against.
    pub scale: T,
}

impl<T: Scalar> HpeCertificate<T> {
    pub fn holds(&self, rel_tol: T) -> bool {
        self.slack >= -rel_tol * self.scale
    }
}

pub fn hpe_slack<T: Scalar, P: SplitProblem<T> + ?Sized>(
    metric: &MSeminorm<'_, T, P>,
    z_prev: &PrimalDual<T>,
    z: &PrimalDual<T>,
    z_tilde: &PrimalDual<T>,
    eta_prev: T,
    eta_curr: T,
    sigma: T,
) -> Result<HpeCertificate<T>> {
    let to_prev = metric.squared(&z_tilde.difference(z_prev))?;
    let to_curr = metric.squared(&z_tilde.difference(z))?;
    Ok(HpeCertificate {
        sigma,
        eta_prev,
        eta_curr,
        slack: sigma * to_prev + eta_prev - to_curr - eta_curr,
        scale: T::one() + sigma * to_prev + eta_prev,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseReport<T> {
    pub best_step_norm: T,
    pub bound: T,
}

/// `sqrt(d0 / k) sqrt((2 (1 + sigma) + 4 mu) / (1 - sigma))`.
pub fn pointwise_bound<T: Scalar>(d0_estimate: T, sigma: T, mu: T, k: usize) -> Result<T> {
    if !(sigma < T::one()) {
        return Err(Error::Domain(format!("sigma = {sigma} must be below 1")));
    }
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let k = T::from_usize(k).unwrap();
    let two = T::lit(2.0);
    Ok((d0_estimate / k).sqrt() * ((two * (T::one() + sigma) + T::lit(4.0) * mu) / (T::one() - sigma)).sqrt())
}

/// Best M-step over the first `k` recorded step norms together with the
/// pointwise bound at `k`.
pub fn pointwise_report<T: Scalar>(step_norms: &[T], d0_estimate: T, sigma: T, mu: T, k: usize) -> Result<PointwiseReport<T>> {
    if k == 0 || k > step_norms.len() {
        return Err(Error::Domain(format!("k = {k} outside 1..={}", step_norms.len())));
    }
    let best = step_norms[..k].iter().copied().fold(T::infinity(), T::min);
    Ok(PointwiseReport {
        best_step_norm: best,
        bound: pointwise_bound(d0_estimate, sigma, mu, k)?,
    })
}

/// Sufficient statistics for the ergodic sequence.
///
/// The epsilons average `<s_i, p_i - p_avg>` over iterations, where `p_avg`
/// is only known at the end. Expanding the bilinear form gives
/// `eps = (1/k) Σ <s_i, p_i> - <(1/k) Σ s_i, p_avg>`, so keeping the two sums
/// is enough.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicState<T> {
    pub k: usize,
    pub sum_x_tilde: Array1<T>,
    pub sum_y: Array1<T>,
    pub sum_gamma_tilde: Array1<T>,
    /// Σ (z_{i-1} - z_i).
    pub sum_r: PrimalDual<T>,
    /// Σ (r_{i,x} / beta + Aᵗ gamma_tilde_i).
    pub sum_s_x: Array1<T>,
    /// Σ ((H + beta BᵗB) r_{i,y} + Bᵗ gamma_tilde_i).
    pub sum_s_y: Array1<T>,
    pub inner_sum_x: T,
    pub inner_sum_y: T,
    /// Σ (H + beta BᵗB) r_{i,y}.
    sum_m_r_y: Array1<T>,
    /// Σ <r_{i,x}/beta, x_tilde_i>, Σ <(H + beta BᵗB) r_{i,y}, y_i>,
    /// Σ <r_{i,gamma}/(theta beta), gamma_tilde_i>.
    inner_m: [T; 3],
    magnitude: T,
}

impl<T: Scalar> ErgodicState<T> {
    pub fn new(nx: usize, ny: usize, nc: usize) -> Self {
        Self {
            k: 0,
            sum_x_tilde: Array1::zeros(nx),
            sum_y: Array1::zeros(ny),
            sum_gamma_tilde: Array1::zeros(nc),
            sum_r: PrimalDual::zeros(nx, ny, nc),
            sum_s_x: Array1::zeros(nx),
            sum_s_y: Array1::zeros(ny),
            inner_sum_x: T::zero(),
            inner_sum_y: T::zero(),
            sum_m_r_y: Array1::zeros(ny),
            inner_m: [T::zero(); 3],
            magnitude: T::zero(),
        }
    }

    pub fn for_problem<P: SplitProblem<T> + ?Sized>(problem: &P) -> Self {
        Self::new(problem.x_dim(), problem.y_dim(), problem.c_dim())
    }

    /// Folds in iteration `curr` (with predecessor `prev`).
    pub fn update<P: SplitProblem<T> + ?Sized>(
        &mut self,
        problem: &P,
        beta: T,
        theta: T,
        prev: &Iterate<T>,
        curr: &Iterate<T>,
    ) {
        let metric = MSeminorm::new(problem, beta, theta);
        let r = prev.z().difference(&curr.z());
        let r_x_scaled = r.x.mapv(|e| e / beta);
        let m_r_y = metric.y_block(r.y.view());
        let r_g_scaled = r.gamma.mapv(|e| e / (theta * beta));

        let s_x = &r_x_scaled + &problem.apply_at(curr.gamma_tilde.view());
        let s_y = &m_r_y + &problem.apply_bt(curr.gamma_tilde.view());

        let terms = [
            dot(s_x.view(), curr.x_tilde.view()),
            dot(s_y.view(), curr.y.view()),
            dot(r_x_scaled.view(), curr.x_tilde.view()),
            dot(m_r_y.view(), curr.y.view()),
            dot(r_g_scaled.view(), curr.gamma_tilde.view()),
        ];
        self.inner_sum_x += terms[0];
        self.inner_sum_y += terms[1];
        self.inner_m[0] += terms[2];
        self.inner_m[1] += terms[3];
        self.inner_m[2] += terms[4];
        self.magnitude += terms.iter().fold(T::zero(), |a, t| a + t.abs());

        self.sum_x_tilde += &curr.x_tilde;
        self.sum_y += &curr.y;
        self.sum_gamma_tilde += &curr.gamma_tilde;
        self.sum_r.x += &r.x;
        self.sum_r.y += &r.y;
        self.sum_r.gamma += &r.gamma;
        self.sum_s_x += &s_x;
        self.sum_s_y += &s_y;
        self.sum_m_r_y += &m_r_y;
        self.k += 1;
    }

    fn mean(&self, v: &Array1<T>) -> Array1<T> {
        let k = T::from_usize(self.k.max(1)).unwrap();
        v.mapv(|e| e / k)
    }

    pub fn x_tilde_average(&self) -> Array1<T> {
        self.mean(&self.sum_x_tilde)
    }

    pub fn y_average(&self) -> Array1<T> {
        self.mean(&self.sum_y)
    }

    pub fn gamma_tilde_average(&self) -> Array1<T> {
        self.mean(&self.sum_gamma_tilde)
    }

    pub fn r_average(&self) -> PrimalDual<T> {
        PrimalDual::new(self.mean(&self.sum_r.x), self.mean(&self.sum_r.y), self.mean(&self.sum_r.gamma))
    }

    /// `r^a_x / beta + Aᵗ gamma_tilde^a`, an `eps_x`-subgradient of `f` at the
    /// averaged `x_tilde`.
    pub fn x_subgradient(&self) -> Array1<T> {
        self.mean(&self.sum_s_x)
    }

    /// `(H + beta BᵗB) r^a_y + Bᵗ gamma_tilde^a`, an `eps_y`-subgradient of `g`
    /// at the averaged `y`.
    pub fn y_subgradient(&self) -> Array1<T> {
        self.mean(&self.sum_s_y)
    }

    pub fn eps_x(&self) -> T {
        let k = T::from_usize(self.k.max(1)).unwrap();
        self.inner_sum_x / k - dot(self.x_subgradient().view(), self.x_tilde_average().view())
    }

    pub fn eps_y(&self) -> T {
        let k = T::from_usize(self.k.max(1)).unwrap();
        self.inner_sum_y / k - dot(self.y_subgradient().view(), self.y_average().view())
    }

    /// The single epsilon of the HPE ergodic sequence, built from `M r_i`
    /// against `z_tilde_i - z_tilde^a`. Equals `eps_x + eps_y` in exact
    /// arithmetic.
    pub fn eps_combined(&self, beta: T, theta: T) -> T {
        let k = T::from_usize(self.k.max(1)).unwrap();
        let x_part = self.inner_m[0] / k
            - dot(self.mean(&self.sum_r.x).view(), self.x_tilde_average().view()) / beta;
        let y_part = self.inner_m[1] / k - dot(self.mean(&self.sum_m_r_y).view(), self.y_average().view());
        let g_part = self.inner_m[2] / k
            - dot(self.mean(&self.sum_r.gamma).view(), self.gamma_tilde_average().view()) / (theta * beta);
        x_part + y_part + g_part
    }

    /// Average absolute size of the accumulated inner products.
    pub fn magnitude(&self) -> T {
        self.magnitude / T::from_usize(self.k.max(1)).unwrap()
    }
}

/// Free-function form of [`ErgodicState::update`].
pub fn ergodic_update<T: Scalar, P: SplitProblem<T> + ?Sized>(
    mut state: ErgodicState<T>,
    prev: &Iterate<T>,
    curr: &Iterate<T>,
    problem: &P,
    beta: T,
    theta: T,
) -> ErgodicState<T> {
    state.update(problem, beta, theta, prev, curr);
    state
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicReport<T> {
    pub k: usize,
    pub r_a_norm: T,
    pub eps_x: T,
    pub eps_y: T,
    pub eps_combined: T,
    pub eps_scale: T,
    /// `2 sqrt((1 + mu) d0) / k`.
    pub residual_bound: T,
    /// `3 (1 + mu) (3 - 2 sigma) d0 / (2 (1 - sigma) k)`.
    pub eps_bound: T,
    /// `‖A x_tilde^a + B y^a - b - r^a_gamma / (theta beta)‖`.
    pub feasibility_gap: T,
    pub gap_scale: T,
}

pub fn ergodic_report<T: Scalar, P: SplitProblem<T> + ?Sized>(
    state: &ErgodicState<T>,
    metric: &MSeminorm<'_, T, P>,
    d0_estimate: T,
    sigma: T,
    mu: T,
) -> Result<ErgodicReport<T>> {
    if state.k == 0 {
        return Err(Error::Domain("ergodic report needs at least one iteration".into()));
    }
    if !(sigma < T::one()) {
        return Err(Error::Domain(format!("sigma = {sigma} must be below 1")));
    }
    let (beta, theta) = (metric.beta(), metric.theta());
    let k = T::from_usize(state.k).unwrap();
    let one = T::one();
    let two = T::lit(2.0);
    let r_a = state.r_average();
    let r_a_norm = metric.norm(&r_a)?;

    let problem = metric.problem;
    let ax = problem.apply_a(state.x_tilde_average().view());
    let by = problem.apply_b(state.y_average().view());
    let scaled_r_gamma = r_a.gamma.mapv(|e| e / (theta * beta));
    let gap_vec = &(&ax + &by) - &problem.offset() - &scaled_r_gamma;
    let gap_scale = one + norm(ax.view()) + norm(by.view()) + norm(problem.offset()) + norm(scaled_r_gamma.view());

    let eps_x = state.eps_x();
    let eps_y = state.eps_y();
    let eps_combined = state.eps_combined(beta, theta);
    Ok(ErgodicReport {
        k: state.k,
        r_a_norm,
        eps_x,
        eps_y,
        eps_combined,
        eps_scale: state.magnitude() + eps_x.abs() + eps_y.abs(),
        residual_bound: two * ((one + mu) * d0_estimate).sqrt() / k,
        eps_bound: T::lit(3.0) * (one + mu) * (T::lit(3.0) - two * sigma) * d0_estimate / (two * (one - sigma) * k),
        feasibility_gap: norm(gap_vec.view()),
        gap_scale,
    })
}

/// `‖z_ref - z0‖²_M`, an upper bound on the squared M-distance from `z0` to
/// the solution set when `z_ref` is (close to) a saddle point.
pub fn d0_estimate<T: Scalar, P: SplitProblem<T> + ?Sized>(
    z0: &PrimalDual<T>,
    z_ref: &PrimalDual<T>,
    metric: &MSeminorm<'_, T, P>,
) -> Result<T> {
    metric.squared(&z_ref.difference(z0))
}

/// Constants of the HPE embedding for one solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpeConstants<T> {
    pub sigma: T,
    pub mu: T,
    pub tau1: T,
    pub tau2: T,
    pub theta: T,
    pub beta: T,
}

impl<T: Scalar> HpeConstants<T> {
    pub fn new(config: &SolverConfig<T>) -> Result<Self> {
        let sigma = min_sigma(config.tau1, config.tau2, config.theta)?;
        let (mu, _) = mu_and_eta0(sigma, config.tau1, config.theta, T::zero())?;
        Ok(Self {
            sigma,
            mu,
            tau1: config.tau1,
            tau2: config.tau2,
            theta: config.theta,
            beta: config.beta,
        })
    }
}

/// Relative tolerance applied to every certificate inequality.
pub const CERT_REL_TOL: f64 = 1e-8;
/// Relative tolerance for the ergodic feasibility identity and the epsilon
/// identity.
pub const IDENTITY_REL_TOL: f64 = 1e-10;

/// One row of the certificate report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateRow {
    pub k: usize,
    pub slack: f64,
    pub slack_scale: f64,
    pub eta: f64,
    pub step_norm: f64,
    pub best_step_norm: f64,
    pub pointwise_bound: f64,
    pub r_a_norm: f64,
    pub ergodic_bound: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_combined: f64,
    pub eps_scale: f64,
    pub eps_bound: f64,
    pub feasibility_gap: f64,
    pub gap_scale: f64,
}

impl CertificateRow {
    /// Human-readable descriptions of every inequality this row violates.
    pub fn violations(&self) -> Vec<String> {
        let tol = CERT_REL_TOL;
        let mut out = Vec::new();
        let k = self.k;
        if self.slack < -tol * self.slack_scale {
            out.push(format!("k={k}: HPE slack {} below -{tol}*{}", self.slack, self.slack_scale));
        }
        if self.best_step_norm > self.pointwise_bound + tol * (1.0 + self.pointwise_bound) {
            out.push(format!(
                "k={k}: best step {} exceeds pointwise bound {}",
                self.best_step_norm, self.pointwise_bound
            ));
        }
        if self.r_a_norm > self.ergodic_bound + tol * (1.0 + self.ergodic_bound) {
            out.push(format!("k={k}: ergodic residual {} exceeds {}", self.r_a_norm, self.ergodic_bound));
        }
        let eps = self.eps_x + self.eps_y;
        if eps > self.eps_bound + tol * (1.0 + self.eps_bound) {
            out.push(format!("k={k}: eps_x + eps_y = {eps} exceeds {}", self.eps_bound));
        }
        if self.eps_x < -tol || self.eps_y < -tol {
            out.push(format!("k={k}: negative epsilon ({}, {})", self.eps_x, self.eps_y));
        }
        if self.feasibility_gap > IDENTITY_REL_TOL * self.gap_scale {
            out.push(format!("k={k}: feasibility gap {}", self.feasibility_gap));
        }
        if (self.eps_combined - eps).abs() > IDENTITY_REL_TOL * (1.0 + self.eps_scale) {
            out.push(format!("k={k}: combined eps {} != eps_x + eps_y = {eps}", self.eps_combined));
        }
        out
    }
}

/// Observer that evaluates every certificate after each outer iteration.
#[derive(Debug, Clone)]
pub struct CertificateMonitor<T> {
    constants: HpeConstants<T>,
    d0: T,
    eta_prev: T,
    best_step: T,
    ergodic: Option<ErgodicState<T>>,
    rows: Vec<CertificateRow>,
}

impl<T: Scalar> CertificateMonitor<T> {
    /// `d0_estimate` must be an upper bound on the squared M-distance from the
    /// start point to the solution set (see [`d0_estimate`]).
    pub fn new(config: &SolverConfig<T>, d0_estimate: T) -> Result<Self> {
        let constants = HpeConstants::new(config)?;
        let (_, eta0) = mu_and_eta0(constants.sigma, constants.tau1, constants.theta, d0_estimate)?;
        Ok(Self {
            constants,
            d0: d0_estimate,
            eta_prev: eta0,
            best_step: T::infinity(),
            ergodic: None,
            rows: Vec::new(),
        })
    }

    pub fn constants(&self) -> &HpeConstants<T> {
        &self.constants
    }

    pub fn rows(&self) -> &[CertificateRow] {
        &self.rows
    }

    pub fn ergodic_state(&self) -> Option<&ErgodicState<T>> {
        self.ergodic.as_ref()
    }

    pub fn violations(&self) -> Vec<String> {
        self.rows.iter().flat_map(CertificateRow::violations).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows)?)
    }
}

impl<T: Scalar, P: SplitProblem<T> + ?Sized> StepObserver<T, P> for CertificateMonitor<T> {
    fn observe(&mut self, problem: &P, prev: &Iterate<T>, curr: &Iterate<T>) -> Result<Option<T>> {
        let c = self.constants;
        let metric = MSeminorm::new(problem, c.beta, c.theta);
        let z_prev = prev.z();
        let z = curr.z();
        let gamma_diff = &curr.gamma - &prev.gamma;
        let y_diff = &curr.y - &prev.y;
        let eta = eta_k(problem, gamma_diff.view(), y_diff.view(), c.sigma, c.tau1, c.theta, c.beta)?;
        let cert = hpe_slack(&metric, &z_prev, &z, &curr.z_tilde(), self.eta_prev, eta, c.sigma)?;
        self.eta_prev = eta;

        let step = metric.norm_of_difference(&z_prev, &z)?;
        self.best_step = self.best_step.min(step);

        let ergodic = self.ergodic.get_or_insert_with(|| ErgodicState::for_problem(problem));
        ergodic.update(problem, c.beta, c.theta, prev, curr);
        let k = ergodic.k;
        let pointwise = pointwise_bound(self.d0, c.sigma, c.mu, k)?;
        let erg = ergodic_report(ergodic, &metric, self.d0, c.sigma, c.mu)?;

        let f = Scalar::to_f64_lossy;
        self.rows.push(CertificateRow {
            k,
            slack: f(cert.slack),
            slack_scale: f(cert.scale),
            eta: f(eta),
            step_norm: f(step),
            best_step_norm: f(self.best_step),
            pointwise_bound: f(pointwise),
            r_a_norm: f(erg.r_a_norm),
            ergodic_bound: f(erg.residual_bound),
            eps_x: f(erg.eps_x),
            eps_y: f(erg.eps_y),
            eps_combined: f(erg.eps_combined),
            eps_scale: f(erg.eps_scale),
            eps_bound: f(erg.eps_bound),
            feasibility_gap: f(erg.feasibility_gap),
            gap_scale: f(erg.gap_scale),
        });
        Ok(Some(cert.slack))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sigma_closed_forms_at_theta_one() {
        assert_abs_diff_eq!(min_sigma(0.0, 0.0, 1.0).unwrap(), 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(min_sigma(0.99, 0.0, 1.0).unwrap(), 0.995, epsilon = 1e-10);
    }

    #[test]
    fn sigma_is_clamped_by_tau2() {
        assert_eq!(min_sigma(0.0, 0.9, 1.0).unwrap(), 0.9);
    }

    #[test]
    fn sigma_minimal_at_large_theta() {
        let tau1 = 0.061875;
        let s = min_sigma(tau1, 0.0, 1.6).unwrap();
        assert!(is_psd(&g_matrix(s, tau1, 1.6)));
        assert!(!is_psd(&g_matrix(s - 1e-6, tau1, 1.6)));
        assert!(s < 1.0);
    }

    #[test]
    fn sigma_rejects_bad_inputs() {
        assert!(min_sigma(1.0, 0.0, 1.0).is_err());
        assert!(min_sigma(0.0, 0.0, 1.7).is_err());
    }

    #[test]
    fn mu_values() {
        let (mu, eta0) = mu_and_eta0(0.995, 0.99, 1.0, 3.0).unwrap();
        assert_abs_diff_eq!(mu, 0.02, epsilon = 1e-14);
        assert_abs_diff_eq!(eta0, 0.06, epsilon = 1e-14);
        let (mu, eta0) = mu_and_eta0(0.5, 0.0, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(mu, 2.0, epsilon = 1e-15);
        assert_eq!(eta0, 0.0);
    }

    #[test]
    fn pointwise_bound_scales_as_inverse_sqrt() {
        let b1 = pointwise_bound(2.0, 0.7, 0.3, 5).unwrap();
        let b4 = pointwise_bound(2.0, 0.7, 0.3, 20).unwrap();
        assert_abs_diff_eq!(b4, b1 / 2.0, epsilon = 1e-14);
        assert!(pointwise_bound(1.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn pointwise_report_takes_running_minimum() {
        let steps = [3.0, 1.0, 2.0, 0.5];
        let r = pointwise_report(&steps, 1.0, 0.5, 2.0, 3).unwrap();
        assert_eq!(r.best_step_norm, 1.0);
        assert!(pointwise_report(&steps, 1.0, 0.5, 2.0, 0).is_err());
        assert!(pointwise_report(&steps, 1.0, 0.5, 2.0, 5).is_err());
    }
}
