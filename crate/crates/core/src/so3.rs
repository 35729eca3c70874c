//! Lie-group primitives on SO(3).
//!
//! Rotations are stored as 3×3 direction-cosine matrices. Tangent vectors
//! live in ℝ³ via the usual hat/vee identification with so(3); a tangent
//! vector is an axis scaled by an angle in radians.
//!
//! The estimation error convention used throughout the crate is the
//! right-invariant error `log(R · R̂ᵀ)` where `R` is the true attitude and
//! `R̂` the estimate. The filter literature often writes `log(R̂ · Rᵀ)`; the
//! two differ only by sign (`log(Qᵀ) = −log(Q)`), so outer-product
//! covariances are identical under either choice.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element of so(3) ≅ ℝ³ (axis times angle, radians).
pub type TangentVector = Vector3<f64>;

/// Below this angle the Rodrigues coefficients are evaluated by Taylor series.
pub const SMALL_ANGLE: f64 = 1e-4;

/// `log` refuses rotations whose angle is within this margin of π.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;

/// Orthogonality defect (Frobenius norm of `mᵀm − I`) above which a composed
/// rotation is projected back onto SO(3).
pub const REORTHONORMALIZE_DEFECT: f64 = 1e-9;

/// Largest defect accepted by [`Rotation::from_matrix`].
const ACCEPT_DEFECT: f64 = 1e-6;

const SKEW_TOL: f64 = 1e-9;

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates `m` as a rotation. Matrices with a small orthogonality
    /// defect (below 1e-6) are accepted and projected onto SO(3) if the
    /// defect exceeds [`REORTHONORMALIZE_DEFECT`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NotARotation("non-finite entry".into()));
        }
        let defect = orthogonality_defect(&m);
        if defect > ACCEPT_DEFECT {
            return Err(Error::NotARotation(format!(
                "orthogonality defect {defect:e}"
            )));
        }
        let det = m.determinant();
        if det < 0.0 {
            return Err(Error::NotARotation(format!("determinant {det}")));
        }
        Ok(Rotation::renormalized(m))
    }

    /// Wraps `m` without checks beyond re-orthonormalization on drift.
    pub(crate) fn renormalized(m: Matrix3<f64>) -> Self {
        if orthogonality_defect(&m) > REORTHONORMALIZE_DEFECT {
            Rotation(polar_project(&m))
        } else {
            Rotation(m)
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        exp(&(axis.normalize() * angle))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Same as [`Rotation::transpose`].
    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    /// Rotation angle in `[0, π]`, from the trace.
    pub fn angle(&self) -> f64 {
        let w = skew_part(&self.0);
        let c = 0.5 * (self.0.trace() - 1.0);
        w.norm().atan2(c)
    }

    pub fn log(&self) -> Result<TangentVector> {
        log(self)
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::renormalized(self.0 * rhs.0)
    }
}

impl Mul<&Rotation> for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation::renormalized(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        mat3_to_rows(&r.0)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = Error;
    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation::from_matrix(rows_to_mat3(&rows))
    }
}

pub(crate) fn mat3_to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    out
}

pub(crate) fn rows_to_mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

/// Nearest rotation in Frobenius norm (orthogonal polar factor).
fn polar_project(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s)) * v_t
}

/// Half of the vee of the antisymmetric part: `sin θ · axis` for a rotation.
fn skew_part(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// The cross-product matrix `(v)×`, so that `hat(v) * u == v.cross(u)`.
pub fn hat(v: &TangentVector) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Fails if the symmetric part of `s` exceeds 1e-9.
pub fn vee(s: &Matrix3<f64>) -> Result<TangentVector> {
    let sym = (s + s.transpose()).norm();
    if !(sym < SKEW_TOL) {
        return Err(Error::NotSkewSymmetric(sym));
    }
    Ok(Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `sin θ / θ` and `(1 − cos θ) / θ²`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 * (1.0 - t2 / 20.0),
            0.5 - t2 / 24.0 * (1.0 - t2 / 30.0),
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    }
}

/// Group exponential `expm((v)×)` via the Rodrigues formula.
pub fn exp(v: &TangentVector) -> Rotation {
    let theta = v.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let k = hat(v);
    Rotation::renormalized(Matrix3::identity() + k * a + k * k * b)
}

/// Principal logarithm. Defined on rotations with angle below
/// `π − CUT_LOCUS_MARGIN`; closer to the cut locus the axis sign is
/// ambiguous and [`Error::AngleNearPi`] is returned.
pub fn log(r: &Rotation) -> Result<TangentVector> {
    let m = r.matrix();
    let w = skew_part(m);
    let s = w.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);
    if theta >= PI - CUT_LOCUS_MARGIN {
        return Err(Error::AngleNearPi(theta));
    }
    if theta < SMALL_ANGLE {
        // θ / sin θ
        let t2 = theta * theta;
        return Ok(w * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0));
    }
    if theta < 0.75 * PI {
        return Ok(w * (theta / s));
    }
    // Near π the antisymmetric part is small; recover the axis from the
    // symmetric part (1 − cos θ) a aᵀ and take the sign from w.
    let sym = 0.5 * (m + m.transpose()) - Matrix3::identity() * c;
    let (mut best, mut col) = (0usize, f64::NEG_INFINITY);
    for i in 0..3 {
        if sym[(i, i)] > col {
            col = sym[(i, i)];
            best = i;
        }
    }
    let mut axis = sym.column(best).into_owned().normalize();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Bi-invariant geodesic distance `‖log(R1 R2ᵀ)‖`.
pub fn distance(r1: &Rotation, r2: &Rotation) -> Result<f64> {
    Ok(log(&(r1 * &r2.transpose()))?.norm())
}

/// Second-order BCH expansion of the differential of `log` at `exp(q)`:
///
/// `d/dt log(exp(tξ) exp(q)) |₀ ≈ [I − ½(q)× + (1/12)(q)×²] ξ`
///
/// Valid for `‖q‖ < π`; the neglected remainder is `(‖q‖²/720)(q)×² ξ + …`.
pub fn dlog_bch(q: &TangentVector, xi: &TangentVector) -> TangentVector {
    let k = hat(q);
    xi - 0.5 * (k * xi) + (k * (k * xi)) / 12.0
}

/// Isotropic Gaussian tangent sample with per-axis standard deviation `sigma`.
pub fn sample_tangent_gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> TangentVector {
    Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

/// Uniformly distributed (Haar) random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    // Normalized Gaussian 4-vector is uniform on S³.
    let mut q = [0.0f64; 4];
    for x in q.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    Rotation::renormalized(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}
