//! Partially inexact proximal ADMM (PIP-ADMM) for
//!
//! ```text
//! min f(x) + g(y)   s.t.   A x + B y = b
//! ```
//!
//! The x-subproblem is solved inexactly under a relative error test and the
//! y-subproblem exactly, optionally with a proximal term `H`. The multiplier
//! update carries a stepsize `theta`. Alongside the solver, [`monitor`] turns
//! the convergence theory into runtime certificates, checked at every outer
//! iteration.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases at the crate root are the ones most callers want.

// `!(x > 0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod inner;
pub mod linalg;
pub mod monitor;
pub mod problems;
mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Dataset, RandomLassoSpec};
pub use inner::{InnerFailure, InnerFailureReason, InnerSolution};
pub use monitor::{CertificateMonitor, CertificateRow, ErgodicState, HpeConstants, MSeminorm, PrimalDual};
pub use problems::{LassoInstance, LassoProblem, LogRegInstance, LogRegProblem};
pub use solver::{
    Iterate, Method, SolveResult, SolveStatus, SolverConfig, SplitProblem, StepObserver,
    TraceRecord, XSubproblem,
};

pub type SolverConfig64 = SolverConfig<f64>;
pub type Iterate64 = Iterate<f64>;
pub type SolveResult64 = SolveResult<f64>;
pub type LassoInstance64 = LassoInstance<f64>;
pub type LassoProblem64<'a> = LassoProblem<'a, f64>;
pub type LogRegInstance64 = LogRegInstance<f64>;
pub type LogRegProblem64<'a> = LogRegProblem<'a, f64>;
pub type Dataset64 = Dataset<f64>;
pub type CertificateMonitor64 = CertificateMonitor<f64>;

pub type SolverConfig32 = SolverConfig<f32>;
pub type LassoInstance32 = LassoInstance<f32>;
pub type LassoProblem32<'a> = LassoProblem<'a, f32>;
