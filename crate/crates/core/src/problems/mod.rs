//! Concrete [`SplitProblem`](crate::SplitProblem) adapters.
//!
//! Both problems use the consensus splitting `A = -I`, `B = I`, `b = 0` with
//! an ℓ1 penalty on `y`, so the y-subproblem is a soft threshold.

mod lasso;
mod logreg;

pub use lasso::{lasso_delta, lasso_problem, LassoInstance, LassoProblem, LassoXSolver};
pub use logreg::{logreg_lambda_max, logreg_problem, LogRegInstance, LogRegProblem, LogisticSubproblem};

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::Scalar;

/// Componentwise `sign(a_i) max(0, |a_i| - kappa)`.
pub fn shrinkage<T: Scalar>(a: ArrayView1<T>, kappa: T) -> Result<Array1<T>> {
    if !(kappa >= T::zero()) {
        return Err(Error::Domain(format!("shrinkage threshold must be nonnegative, got {kappa}")));
    }
    Ok(a.mapv(|e| soft_threshold(e, kappa)))
}

#[inline]
pub(crate) fn soft_threshold<T: Scalar>(e: T, kappa: T) -> T {
    let mag = e.abs() - kappa;
    if mag > T::zero() {
        mag.copysign(e)
    } else {
        T::zero()
    }
}

/// Largest violation of `s ∈ ∂(kappa ‖·‖₁)(y)`, where the first
/// `unpenalized` coordinates carry no penalty (their subgradient is `{0}`).
pub fn l1_subgradient_violation<T: Scalar>(y: ArrayView1<T>, s: ArrayView1<T>, kappa: T, unpenalized: usize) -> T {
    y.iter()
        .zip(s.iter())
        .enumerate()
        .map(|(i, (&yi, &si))| {
            if i < unpenalized {
                si.abs()
            } else if yi != T::zero() {
                (si - kappa.copysign(yi)).abs()
            } else {
                (si.abs() - kappa).max(T::zero())
            }
        })
        .fold(T::zero(), T::max)
}
