//! Invariant extended Kalman filter for `Ṙ = R (ω)×` with exactly known
//! angular velocity and pairs of noisy vector observations
//! `Yⁱ = Rᵀ dⁱ + Vⁱ`, `Vⁱ ~ N(0, σᵢ² I)`.
//!
//! The filter error `log(R̂ Rᵀ)` is constant between measurements, so the
//! covariance does not change during propagation. At an update the
//! covariance follows the information recursion
//! `(P⁺)⁻¹ = P⁻¹ + H⁰ᵀH⁰/σ₀² + H¹ᵀH¹/σ₁²` with `Hⁱ = (dⁱ)×`, which depends
//! neither on the observations nor on the true trajectory. The filter
//! covariance therefore equals the inverse of the accumulated Fisher
//! information at every epoch.
//!
//! The covariance is held in information form; [`IekfState::p`]
//! materializes it.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{fisher_single_vector, CovMatrix, InfoMatrix};
use crate::so3::{exp, hat, Rotation, TangentVector};
use crate::wahba::{check_observable, solve_wahba, VectorMeasurement};

pub type Gain = SMatrix<f64, 3, 6>;
pub type Observation = SMatrix<f64, 6, 3>;

/// Largest integration step for angular-velocity profiles given as closures.
pub const MAX_FLOW_STEP: f64 = 1e-3;

const TIME_TOL: f64 = 1e-9;

/// Known angular velocity (body frame, rad/s).
pub trait AngularVelocity {
    /// Rotation `A` with `R(t1) = R(t0) · A` along the flow of `Ṙ = R (ω)×`.
    fn flow(&self, t0: f64, t1: f64) -> Rotation;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub omega: Vector3<f64>,
}

/// Piecewise-constant angular velocity; zero outside every segment. The
/// flow over each constant piece is a single exponential, so propagation is
/// exact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseConstantOmega {
    segments: Vec<OmegaSegment>,
}

impl PiecewiseConstantOmega {
    /// Segments must have `t_start ≤ t_end` and must not overlap.
    pub fn new(mut segments: Vec<OmegaSegment>) -> Result<Self> {
        segments.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        for s in &segments {
            if !(s.t_end >= s.t_start) || !s.omega.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "bad omega segment [{}, {}]",
                    s.t_start, s.t_end
                )));
            }
        }
        for w in segments.windows(2) {
            if w[1].t_start < w[0].t_end - TIME_TOL {
                return Err(Error::InvalidInput(format!(
                    "omega segments overlap at t = {}",
                    w[1].t_start
                )));
            }
        }
        Ok(PiecewiseConstantOmega { segments })
    }

    pub fn constant(omega: Vector3<f64>, t_start: f64, t_end: f64) -> Self {
        PiecewiseConstantOmega {
            segments: vec![OmegaSegment { t_start, t_end, omega }],
        }
    }

    pub fn segments(&self) -> &[OmegaSegment] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.segments
            .iter()
            .find(|s| s.t_start <= t && t < s.t_end)
            .map_or_else(Vector3::zeros, |s| s.omega)
    }
}

impl AngularVelocity for PiecewiseConstantOmega {
    fn flow(&self, t0: f64, t1: f64) -> Rotation {
        let mut a = Rotation::identity();
        for s in &self.segments {
            let lo = s.t_start.max(t0);
            let hi = s.t_end.min(t1);
            if hi > lo {
                a = a * exp(&(s.omega * (hi - lo)));
            }
        }
        a
    }
}

/// Arbitrary angular velocity `t ↦ ω(t)`, integrated with exponential
/// midpoint steps no longer than [`MAX_FLOW_STEP`].
pub struct SampledOmega<F>(pub F);

impl<F: Fn(f64) -> Vector3<f64>> AngularVelocity for SampledOmega<F> {
    fn flow(&self, t0: f64, t1: f64) -> Rotation {
        let span = t1 - t0;
        if !(span > 0.0) {
            return Rotation::identity();
        }
        let steps = (span / MAX_FLOW_STEP).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        (0..steps).fold(Rotation::identity(), |a, k| {
            let mid = t0 + (k as f64 + 0.5) * dt;
            a * exp(&((self.0)(mid) * dt))
        })
    }
}

/// Two simultaneous vector observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEpoch {
    pub t_n: f64,
    pub d0: Vector3<f64>,
    pub d1: Vector3<f64>,
    pub y0: Vector3<f64>,
    pub y1: Vector3<f64>,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl MeasurementEpoch {
    /// Fisher information contributed by this epoch.
    pub fn information(&self) -> Result<InfoMatrix> {
        Ok(fisher_single_vector(&self.d0, self.sigma0)? + fisher_single_vector(&self.d1, self.sigma1)?)
    }
}

/// Stacked `[(d0)×; (d1)×]`.
pub fn observation_matrix(d0: &Vector3<f64>, d1: &Vector3<f64>) -> Observation {
    let mut h = Observation::zeros();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(d0));
    h.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat(d1));
    h
}

/// Kalman gain `K = P Hᵀ (H P Hᵀ + N)⁻¹`, `N = blockdiag(σ₀² I, σ₁² I)`.
pub fn compute_gain(
    p: &CovMatrix,
    d0: &Vector3<f64>,
    d1: &Vector3<f64>,
    sigma0: f64,
    sigma1: f64,
) -> Result<Gain> {
    if !(sigma0 > 0.0 && sigma1 > 0.0) {
        return Err(Error::InvalidInput("noise levels must be positive".into()));
    }
    let h = observation_matrix(d0, d1);
    let mut noise = SVector::<f64, 6>::zeros();
    noise.fixed_rows_mut::<3>(0).fill(sigma0 * sigma0);
    noise.fixed_rows_mut::<3>(3).fill(sigma1 * sigma1);
    let hp = h * p.matrix();
    let s = hp * h.transpose() + SMatrix::<f64, 6, 6>::from_diagonal(&noise);
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("innovation covariance not positive definite".into()))?;
    // K = (S⁻¹ H P)ᵀ since S and P are symmetric
    Ok(chol.solve(&hp).transpose())
}

/// First-order error recursion `ξ⁺ = (I − K H) ξ + K v` for the filter
/// error `ξ = log(R̂ Rᵀ)` and stacked noise `v = [v0; v1]`.
pub fn linearized_error_step(
    xi: &TangentVector,
    k: &Gain,
    d0: &Vector3<f64>,
    d1: &Vector3<f64>,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
) -> TangentVector {
    let h = observation_matrix(d0, d1);
    let mut v = SVector::<f64, 6>::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(v0);
    v.fixed_rows_mut::<3>(3).copy_from(v1);
    (Matrix3::identity() - k * h) * xi + k * v
}

/// Filter state. Only obtainable through [`initialize`].
#[derive(Debug, Clone, PartialEq)]
pub struct IekfState {
    r_hat: Rotation,
    info: InfoMatrix,
    t: f64,
}

/// Maximum-likelihood initialization from the first epoch:
/// `R̂ = argmin Σ ‖R̂ Yⁱ − dⁱ‖² / σᵢ²` and `P⁻¹ = H⁰ᵀH⁰/σ₀² + H¹ᵀH¹/σ₁²`.
pub fn initialize(epoch: &MeasurementEpoch) -> Result<IekfState> {
    check_observable([&epoch.d0, &epoch.d1])?;
    let r_hat = solve_wahba(&[
        VectorMeasurement { d: epoch.d0, y: epoch.y0, sigma: epoch.sigma0 },
        VectorMeasurement { d: epoch.d1, y: epoch.y1, sigma: epoch.sigma1 },
    ])?;
    Ok(IekfState {
        r_hat,
        info: epoch.information()?,
        t: epoch.t_n,
    })
}

impl IekfState {
    pub fn r_hat(&self) -> &Rotation {
        &self.r_hat
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Accumulated information `Σ_k H_kᵀH_k/σ_k²`, equal to `P⁻¹`.
    pub fn info_accum(&self) -> &InfoMatrix {
        &self.info
    }

    /// Error covariance `P = info_accum⁻¹`.
    pub fn p(&self) -> Result<CovMatrix> {
        CovMatrix::new(self.info.inverse()?)
    }

    /// `R̂ ← R̂ · A(t, t_next)`. Covariance is unchanged (no process noise).
    pub fn propagate<W: AngularVelocity + ?Sized>(&mut self, omega: &W, t_next: f64) -> Result<()> {
        if t_next < self.t - TIME_TOL {
            return Err(Error::InvalidInput(format!(
                "cannot propagate backwards from {} to {t_next}",
                self.t
            )));
        }
        if t_next > self.t {
            self.r_hat = self.r_hat * omega.flow(self.t, t_next);
        }
        self.t = t_next;
        Ok(())
    }

    /// `R̂⁺ = exp(K [R̂Y⁰ − d⁰; R̂Y¹ − d¹]) R̂` followed by the information
    /// update. The state must already be at `epoch.t_n`.
    pub fn update(&mut self, epoch: &MeasurementEpoch) -> Result<()> {
        if (self.t - epoch.t_n).abs() > TIME_TOL * self.t.abs().max(1.0) {
            return Err(Error::TimeMismatch { state: self.t, epoch: epoch.t_n });
        }
        let k = compute_gain(&self.p()?, &epoch.d0, &epoch.d1, epoch.sigma0, epoch.sigma1)?;
        let mut innovation = SVector::<f64, 6>::zeros();
        innovation
            .fixed_rows_mut::<3>(0)
            .copy_from(&(self.r_hat * epoch.y0 - epoch.d0));
        innovation
            .fixed_rows_mut::<3>(3)
            .copy_from(&(self.r_hat * epoch.y1 - epoch.d1));
        self.r_hat = exp(&(k * innovation)) * self.r_hat;
        self.info += epoch.information()?;
        Ok(())
    }

    /// Propagates to `epoch.t_n`, then updates.
    pub fn step<W: AngularVelocity + ?Sized>(&mut self, omega: &W, epoch: &MeasurementEpoch) -> Result<()> {
        self.propagate(omega, epoch.t_n)?;
        self.update(epoch)
    }
}
