use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation angle {0} rad is too close to pi for the principal logarithm")]
    AngleNearPi(f64),
    #[error("matrix is not skew-symmetric (symmetric part norm {0:e})")]
    NotSkewSymmetric(f64),
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),
    #[error("information matrix is singular (smallest eigenvalue {0:e})")]
    SingularInformation(f64),
    #[error("attitude is unobservable: {0}")]
    Unobservable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("filter time {state} does not match epoch time {epoch}")]
    TimeMismatch { state: f64, epoch: f64 },
    #[error("covariance/information identity violated: relative error {0:e}")]
    IdentityViolation(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
