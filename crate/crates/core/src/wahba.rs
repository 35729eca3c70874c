//! Static attitude determination from vector observations.
//!
//! Measurements are `y_k = Rᵀ d_k + v_k` with `v_k ~ N(0, σ_k² I)`. The
//! maximum-likelihood attitude minimizes `Σ ‖y_k − Rᵀ d_k‖² / (2σ_k²)`,
//! which is solved in closed form by an SVD of the weighted attitude
//! profile matrix.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::Reference;
use crate::montecarlo::{map_trials, ErrorStats, TrialError};
use crate::so3::{sample_tangent_gaussian, Rotation};

/// Sine of the angle below which two reference directions count as collinear.
pub const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorMeasurement {
    /// Reference direction in the fixed frame.
    pub d: Vector3<f64>,
    /// Observation in the body frame.
    pub y: Vector3<f64>,
    pub sigma: f64,
}

/// Fails with [`Error::Unobservable`] unless at least two directions are
/// non-collinear.
pub fn check_observable<'a>(dirs: impl IntoIterator<Item = &'a Vector3<f64>>) -> Result<()> {
    let dirs: Vec<_> = dirs.into_iter().collect();
    for (i, a) in dirs.iter().enumerate() {
        for b in &dirs[i + 1..] {
            let s = a.cross(b).norm() / (a.norm() * b.norm());
            if s > COLLINEAR_TOL {
                return Ok(());
            }
        }
    }
    Err(Error::Unobservable(format!(
        "{} reference direction(s), all collinear",
        dirs.len()
    )))
}

/// Draws one observation per reference at attitude `r`.
///
/// The body-frame noise is generated as `Rᵀ n` with `n ~ N(0, σ² I)`. This
/// has the same distribution as drawing the noise directly (isotropy) and
/// makes a fixed generator state produce equivariant measurement sets.
pub fn simulate_measurements<G: Rng + ?Sized>(
    r: &Rotation,
    refs: &[Reference],
    rng: &mut G,
) -> Result<Vec<VectorMeasurement>> {
    if refs.is_empty() {
        return Err(Error::InvalidInput("no reference vectors".into()));
    }
    let rt = r.transpose();
    refs.iter()
        .map(|rf| {
            rf.validate()?;
            let n = sample_tangent_gaussian(rf.sigma, rng);
            Ok(VectorMeasurement {
                d: rf.d,
                y: rt * (rf.d + n),
                sigma: rf.sigma,
            })
        })
        .collect()
}

/// Negative log-likelihood (up to a constant) of `r` given `meas`.
pub fn wahba_cost(r: &Rotation, meas: &[VectorMeasurement]) -> f64 {
    let rt = r.transpose();
    meas.iter()
        .map(|m| (m.y - rt * m.d).norm_squared() / (2.0 * m.sigma * m.sigma))
        .sum()
}

/// Maximum-likelihood attitude.
///
/// With `B = Σ σ_k⁻² d_k y_kᵀ = U S Vᵀ`, the cost is minimized by
/// `R̂ = U diag(1, 1, det U · det V) Vᵀ`; the last factor keeps `det R̂ = +1`.
pub fn solve_wahba(meas: &[VectorMeasurement]) -> Result<Rotation> {
    for m in meas {
        if !(m.sigma > 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", m.sigma)));
        }
    }
    check_observable(meas.iter().map(|m| &m.d))?;
    let b = meas
        .iter()
        .fold(Matrix3::zeros(), |acc, m| acc + m.d * m.y.transpose() / (m.sigma * m.sigma));
    let svd = b.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = u.determinant() * v_t.determinant();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s.signum()));
    Rotation::from_matrix(u * fix * v_t)
}

/// Runs `n_trials` simulate→solve cycles at the true attitude `r` and
/// collects the errors `log(R R̂ᵀ)`. Trial `i` draws from
/// `trial_rng(seed, i)`.
pub fn empirical_error_covariance(
    r: &Rotation,
    refs: &[Reference],
    n_trials: usize,
    seed: u64,
) -> Result<ErrorStats> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    check_observable(refs.iter().map(|rf| &rf.d))?;
    let trials = map_trials(n_trials, seed, |i, rng| -> Result<TrialError> {
        let meas = simulate_measurements(r, refs, rng)?;
        let est = solve_wahba(&meas)?;
        Ok(TrialError::new(i, r, &est))
    });
    ErrorStats::from_trials(trials.into_iter().collect::<Result<Vec<_>>>()?)
}
