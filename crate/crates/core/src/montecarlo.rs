//! Trial scheduling and error-covariance reduction shared by the static and
//! dynamic experiments.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fisher::CovMatrix;
use crate::rng::{trial_rng, SimRng};
use crate::so3::{Rotation, TangentVector};

/// Trials whose error angle exceeds this are rejected from the covariance.
pub const REJECT_ANGLE: f64 = PI - 1e-3;

/// Largest admissible fraction of rejected trials.
pub const MAX_REJECTED_FRACTION: f64 = 1e-3;

/// Runs `f(i, rng_i)` for `i in 0..n` where `rng_i = trial_rng(seed, i)`.
/// Output order is the trial order regardless of scheduling.
pub fn map_trials<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut SimRng) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n as u64)
            .into_par_iter()
            .map(|i| f(i, &mut trial_rng(seed, i)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n as u64).map(|i| f(i, &mut trial_rng(seed, i))).collect()
    }
}

/// Final estimation error of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialError {
    pub index: u64,
    /// `log(R R̂ᵀ)`, absent for rejected trials.
    pub xi: Option<TangentVector>,
    /// Rotation angle of `R R̂ᵀ`.
    pub angle: f64,
}

impl TrialError {
    pub fn new(index: u64, truth: &Rotation, estimate: &Rotation) -> Self {
        let err = truth * &estimate.transpose();
        let angle = err.angle();
        let xi = if angle > REJECT_ANGLE {
            None
        } else {
            err.log().ok()
        };
        TrialError { index, xi, angle }
    }
}

/// Empirical covariance `(1/n) Σ ξ ξᵀ` and mean of the accepted trial errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub covariance: CovMatrix,
    pub bias: TangentVector,
    pub trial_count: usize,
    pub rejected_trials: usize,
    pub trials: Vec<TrialError>,
}

impl ErrorStats {
    /// Sequential reduction in trial order, so the result is bit-identical
    /// for any worker count.
    pub fn from_trials(trials: Vec<TrialError>) -> Result<Self> {
        let mut sum = Matrix3::zeros();
        let mut mean = Vector3::zeros();
        let mut used = 0usize;
        for xi in trials.iter().filter_map(|t| t.xi) {
            sum += xi * xi.transpose();
            mean += xi;
            used += 1;
        }
        if used > 0 {
            sum /= used as f64;
            mean /= used as f64;
        }
        Ok(ErrorStats {
            covariance: CovMatrix::new(sum)?,
            bias: mean,
            trial_count: trials.len(),
            rejected_trials: trials.len() - used,
            trials,
        })
    }

    pub fn accepted(&self) -> usize {
        self.trial_count - self.rejected_trials
    }

    /// False when more than 0.1% of trials left the injectivity domain of
    /// `log`, or nothing was accepted.
    pub fn is_valid(&self) -> bool {
        self.accepted() > 0
            && (self.rejected_trials as f64) <= MAX_REJECTED_FRACTION * self.trial_count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::exp;
    use rand::Rng;

    #[test]
    fn map_trials_is_ordered_and_seeded() {
        let a = map_trials(64, 3, |i, rng| (i, rng.random::<u64>()));
        let b = map_trials(64, 3, |i, rng| (i, rng.random::<u64>()));
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(k, (i, _))| k as u64 == *i));
    }

    #[test]
    fn rejected_trials_are_counted() {
        let truth = Rotation::identity();
        let near_pi = exp(&(Vector3::x() * (PI - 1e-4)));
        let ok = exp(&(Vector3::y() * 0.1));
        let trials = vec![
            TrialError::new(0, &truth, &ok),
            TrialError::new(1, &truth, &near_pi),
        ];
        assert!(trials[1].xi.is_none());
        let stats = ErrorStats::from_trials(trials).unwrap();
        assert_eq!(stats.rejected_trials, 1);
        assert!(!stats.is_valid());
        // accepted error is log(R R̂ᵀ) = −0.1 e_y
        assert!((stats.bias + Vector3::y() * 0.1).norm() < 1e-12);
        assert!((stats.covariance.matrix()[(1, 1)] - 0.01).abs() < 1e-12);
    }
}
