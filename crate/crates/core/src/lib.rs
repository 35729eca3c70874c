//! Intrinsic Cramér-Rao lower bounds for attitude estimation on SO(3).
//!
//! * [`so3`]: exponential/logarithm maps, distances and the BCH expansion of
//!   the differential of `log`.
//! * [`fisher`]: intrinsic Fisher information for vector measurements and
//!   the curvature-corrected bound in its expanded, squared and Riemannian
//!   forms.
//! * [`wahba`]: static attitude determination by SVD and Monte Carlo error
//!   covariance.
//! * [`iekf`]: invariant EKF with deterministic dynamics, whose covariance
//!   equals the inverse of the accumulated Fisher information.
//! * [`harness`]: scenario files, Monte Carlo reports and the built-in
//!   verification suite used by the `icrb-so3` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fisher;
pub mod harness;
pub mod iekf;
pub mod montecarlo;
pub mod rng;
pub mod so3;
pub mod wahba;

pub use error::{Error, Result};
pub use fisher::{CovMatrix, CurvatureTerm, InfoMatrix, SymMat3};
pub use so3::{Rotation, TangentVector};
