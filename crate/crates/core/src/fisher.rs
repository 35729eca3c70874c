//! Intrinsic Fisher information and Cramér-Rao bounds on SO(3).
//!
//! Information is expressed in a right-invariant basis: the log-likelihood
//! is differentiated along `t ↦ exp(tξ) R`. For a vector measurement
//! `X = Rᵀd + V` with `V ~ N(0, σ²I)` the information is
//! `(1/σ²) (d)×ᵀ (d)×` and does not depend on `R`.
//!
//! The curvature-corrected bound on the error covariance `P` is
//!
//! ```text
//! P ⪰ J⁻¹ − (1/12)(Tr(P)I − P) J⁻¹ − (1/12) J⁻¹ (Tr(P)I − P)
//! ```
//!
//! up to third-order moments of the error. [`icrlb_squared_form`] gives the
//! factored variant `M J⁻¹ M`, and [`smith_form_check`] compares it with the
//! Riemannian formulation built from the curvature operator.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{hat, mat3_to_rows, rows_to_mat3, Rotation};

/// Symmetric 3×3 matrix without a specific role.
pub type SymMat3 = Matrix3<f64>;

/// Absolute eigenvalue tolerance for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-12;

/// Smallest eigenvalue an information matrix must exceed to be inverted.
pub const INVERTIBLE_TOL: f64 = 1e-12;

fn symmetrized(m: &Matrix3<f64>, what: &str) -> Result<Matrix3<f64>> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NotPsd(format!("{what} has non-finite entries")));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::NotPsd(format!("{what} asymmetry {asym:e}")));
    }
    let s = 0.5 * (m + m.transpose());
    let lo = min_eigenvalue(&s);
    if lo < -PSD_TOL {
        return Err(Error::NotPsd(format!("{what} eigenvalue {lo:e}")));
    }
    Ok(s)
}

pub fn min_eigenvalue(s: &SymMat3) -> f64 {
    SymmetricEigen::new(*s).eigenvalues.min()
}

macro_rules! psd_newtype {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
        pub struct $name(Matrix3<f64>);

        impl $name {
            /// Validates symmetry and positive semidefiniteness; the stored
            /// matrix is the symmetric part of `m`.
            pub fn new(m: Matrix3<f64>) -> Result<Self> {
                symmetrized(&m, $what).map($name)
            }

            pub fn zeros() -> Self {
                $name(Matrix3::zeros())
            }

            pub fn matrix(&self) -> &Matrix3<f64> {
                &self.0
            }

            pub fn trace(&self) -> f64 {
                self.0.trace()
            }
        }

        impl From<$name> for [[f64; 3]; 3] {
            fn from(m: $name) -> Self {
                mat3_to_rows(&m.0)
            }
        }

        impl TryFrom<[[f64; 3]; 3]> for $name {
            type Error = Error;
            fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
                $name::new(rows_to_mat3(&rows))
            }
        }
    };
}

psd_newtype!(InfoMatrix, "information matrix");
psd_newtype!(CovMatrix, "covariance matrix");

impl InfoMatrix {
    /// `J⁻¹`, or [`Error::SingularInformation`] when some direction carries
    /// no information.
    pub fn inverse(&self) -> Result<SymMat3> {
        let lo = min_eigenvalue(&self.0);
        if lo <= INVERTIBLE_TOL {
            return Err(Error::SingularInformation(lo));
        }
        let inv = self
            .0
            .try_inverse()
            .ok_or(Error::SingularInformation(lo))?;
        Ok(0.5 * (inv + inv.transpose()))
    }

    pub fn is_invertible(&self) -> bool {
        min_eigenvalue(&self.0) > INVERTIBLE_TOL
    }
}

impl std::ops::Add for InfoMatrix {
    type Output = InfoMatrix;
    fn add(self, rhs: InfoMatrix) -> InfoMatrix {
        InfoMatrix(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for InfoMatrix {
    fn add_assign(&mut self, rhs: InfoMatrix) {
        self.0 += rhs.0;
    }
}

impl CovMatrix {
    pub fn inverse(&self) -> Option<Matrix3<f64>> {
        self.0.try_inverse()
    }
}

/// Curvature operator `R_m(P) = −¼(P − Tr(P) I)` of the bi-invariant metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureTerm(Matrix3<f64>);

impl CurvatureTerm {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Reference direction and per-axis noise level of a vector sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub d: Vector3<f64>,
    pub sigma: f64,
}

impl Reference {
    pub fn new(d: Vector3<f64>, sigma: f64) -> Result<Self> {
        let r = Reference { d, sigma };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.d.norm() > 0.0) || !self.d.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("reference direction must be nonzero".into()));
        }
        Ok(())
    }
}

/// `(1/σ²) (d)×ᵀ (d)× = (1/σ²)(‖d‖² I − d dᵀ)`.
pub fn fisher_single_vector(d: &Vector3<f64>, sigma: f64) -> Result<InfoMatrix> {
    Reference::new(*d, sigma)?;
    let h = hat(d);
    Ok(InfoMatrix(h.transpose() * h / (sigma * sigma)))
}

/// Information of independent vector measurements; the sum of
/// [`fisher_single_vector`] over `refs`. No attitude argument: the result is
/// the same at every `R`.
pub fn fisher_wahba(refs: &[Reference]) -> Result<InfoMatrix> {
    if refs.is_empty() {
        return Err(Error::InvalidInput("no reference vectors".into()));
    }
    refs.iter().try_fold(InfoMatrix::zeros(), |acc, r| {
        Ok(acc + fisher_single_vector(&r.d, r.sigma)?)
    })
}

/// Monte Carlo estimate of the score outer product `E[s sᵀ]` at `r`.
///
/// Measurements are drawn from the model at `r`. The directional derivative
/// `d/dt ln p(X | exp(tξ) R)` at `t = 0` is closed-form for the Gaussian
/// model; its second moment is accumulated along the basis directions and
/// the pairwise sums `e_i + e_j`, and off-diagonal entries are recovered by
/// polarization.
pub fn fisher_score_oracle<G: Rng + ?Sized>(
    r: &Rotation,
    refs: &[Reference],
    n_samples: usize,
    rng: &mut G,
) -> Result<InfoMatrix> {
    if n_samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "score oracle needs at least 1e4 samples, got {n_samples}"
        )));
    }
    if refs.is_empty() {
        return Err(Error::InvalidInput("no reference vectors".into()));
    }
    for rf in refs {
        rf.validate()?;
    }
    let rt = r.transpose();
    let directions: [Vector3<f64>; 6] = [
        Vector3::x(),
        Vector3::y(),
        Vector3::z(),
        Vector3::x() + Vector3::y(),
        Vector3::x() + Vector3::z(),
        Vector3::y() + Vector3::z(),
    ];
    let mut second_moment = [0.0f64; 6];
    for _ in 0..n_samples {
        // gradient of the log-likelihood w.r.t. ξ: Σ (1/σ²) (d)×ᵀ R (X − Rᵀd)
        let mut grad = Vector3::zeros();
        for rf in refs {
            let noise = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * rf.sigma;
            let x = rt * rf.d + noise;
            let resid = r * (x - rt * rf.d);
            grad += hat(&rf.d).transpose() * resid / (rf.sigma * rf.sigma);
        }
        for (acc, dir) in second_moment.iter_mut().zip(directions.iter()) {
            let s = grad.dot(dir);
            *acc += s * s;
        }
    }
    let q: Vec<f64> = second_moment.iter().map(|s| s / n_samples as f64).collect();
    let mut j = Matrix3::zeros();
    for i in 0..3 {
        j[(i, i)] = q[i];
    }
    for (k, (a, b)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let off = 0.5 * (q[3 + k] - q[a] - q[b]);
        j[(a, b)] = off;
        j[(b, a)] = off;
    }
    InfoMatrix::new(j)
}

/// `Tr(P) I − P`
fn trace_complement(p: &CovMatrix) -> Matrix3<f64> {
    Matrix3::identity() * p.trace() - p.matrix()
}

/// Curvature-corrected intrinsic bound
/// `J⁻¹ − (1/12)(Tr(P)I − P)J⁻¹ − (1/12)J⁻¹(Tr(P)I − P)`.
/// With `P = 0` this is the first-order bound `J⁻¹`.
pub fn icrlb(j: &InfoMatrix, p: &CovMatrix) -> Result<SymMat3> {
    let j_inv = j.inverse()?;
    let c = trace_complement(p);
    Ok(j_inv - (c * j_inv + j_inv * c) / 12.0)
}

/// Factored bound `M J⁻¹ M` with `M = (1 − Tr(P)/12) I + P/12`. Differs from
/// [`icrlb`] by the fourth-order term `(1/144)(P − Tr(P)I) J⁻¹ (P − Tr(P)I)`.
pub fn icrlb_squared_form(j: &InfoMatrix, p: &CovMatrix) -> Result<SymMat3> {
    let j_inv = j.inverse()?;
    let m = Matrix3::identity() * (1.0 - p.trace() / 12.0) + p.matrix() / 12.0;
    Ok(m * j_inv * m)
}

pub fn curvature_operator(p: &CovMatrix) -> CurvatureTerm {
    CurvatureTerm(-0.25 * (p.matrix() - Matrix3::identity() * p.trace()))
}

/// Compares the two ways of writing the curvature-corrected inequality as
/// `(something) ⪰ 0`:
///
/// * Riemannian form: `P + (1/3)(R_m J⁻¹ + J⁻¹ R_m) − (1/9) R_m J⁻¹ R_m − J⁻¹`
///   with `R_m` from [`curvature_operator`];
/// * group form: `P − M J⁻¹ M` from [`icrlb_squared_form`].
///
/// Returns the Frobenius norm of their difference, which vanishes
/// identically.
pub fn smith_form_check(j: &InfoMatrix, p: &CovMatrix) -> Result<f64> {
    let j_inv = j.inverse()?;
    let rm = *curvature_operator(p).matrix();
    let riemannian =
        p.matrix() + (rm * j_inv + j_inv * rm) / 3.0 - rm * j_inv * rm / 9.0 - j_inv;
    let group = p.matrix() - icrlb_squared_form(j, p)?;
    Ok((riemannian - group).norm())
}

/// Loewner order test `A ⪰ B`: the smallest eigenvalue of `A − B` is at
/// least `−tol`.
pub fn loewner_geq(a: &SymMat3, b: &SymMat3, tol: f64) -> bool {
    let d = a - b;
    min_eigenvalue(&(0.5 * (d + d.transpose()))) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::so3::{exp, random_rotation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_spd<G: Rng>(rng: &mut G, lo: f64, hi: f64) -> Matrix3<f64> {
        let q = random_rotation(rng);
        let ev = Vector3::new(
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        );
        let m = q.matrix() * Matrix3::from_diagonal(&ev) * q.matrix().transpose();
        0.5 * (m + m.transpose())
    }

    #[test]
    fn single_vector_examples() {
        let j = fisher_single_vector(&Vector3::z(), 1.0).unwrap();
        assert_eq!(*j.matrix(), Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)));
        let j = fisher_single_vector(&Vector3::new(0.0, 0.0, 2.0), 1.0).unwrap();
        assert_eq!(*j.matrix(), Matrix3::from_diagonal(&Vector3::new(4.0, 4.0, 0.0)));
        assert!(fisher_single_vector(&Vector3::z(), 0.0).is_err());
        assert!(fisher_single_vector(&Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn single_vector_kernel_contains_direction() {
        let mut rng = seeded(11);
        for _ in 0..50 {
            let d = Vector3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1);
            let j = fisher_single_vector(&d, rng.random_range(0.01..2.0)).unwrap();
            assert!((j.matrix() * d).amax() < 1e-12 * j.matrix().amax());
        }
    }

    #[test]
    fn single_vector_matches_score_oracle() {
        let mut rng = seeded(12);
        let d = Vector3::new(0.4, -0.7, 0.3).normalize();
        let closed = fisher_single_vector(&d, 0.1).unwrap();
        let refs = [Reference::new(d, 0.1).unwrap()];
        let oracle = fisher_score_oracle(&random_rotation(&mut rng), &refs, 100_000, &mut rng).unwrap();
        let rel = (oracle.matrix() - closed.matrix()).norm() / closed.matrix().norm();
        assert!(rel < 0.02, "relative Frobenius error {rel}");
    }

    #[test]
    fn wahba_information_examples() {
        let refs = [
            Reference::new(Vector3::x(), 1.0).unwrap(),
            Reference::new(Vector3::y(), 1.0).unwrap(),
        ];
        assert_eq!(
            *fisher_wahba(&refs).unwrap().matrix(),
            Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 2.0))
        );

        let single = fisher_wahba(&[Reference::new(Vector3::z(), 1.0).unwrap()]).unwrap();
        assert_eq!(*single.matrix(), Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)));
        assert!(!single.is_invertible());
        assert!(matches!(single.inverse(), Err(Error::SingularInformation(_))));

        let triad: Vec<_> = [Vector3::x(), Vector3::y(), Vector3::z()]
            .into_iter()
            .map(|d| Reference::new(d, 0.1).unwrap())
            .collect();
        let j = fisher_wahba(&triad).unwrap();
        assert_relative_eq!(*j.matrix(), Matrix3::identity() * 200.0, epsilon = 1e-10);

        assert!(fisher_wahba(&[]).is_err());
    }

    #[test]
    fn score_oracle_examples() {
        let refs = [Reference::new(Vector3::z(), 1.0).unwrap()];
        let mut rng = seeded(13);
        let est = fisher_score_oracle(&Rotation::identity(), &refs, 100_000, &mut rng).unwrap();
        let target = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!((est.matrix() - target).amax() < 0.02, "{}", est.matrix());
        assert_eq!(est.matrix(), &est.matrix().transpose());

        let r = exp(&Vector3::new(0.7, -1.1, 0.4));
        let est2 = fisher_score_oracle(&r, &refs, 100_000, &mut rng).unwrap();
        assert!((est.matrix() - est2.matrix()).amax() < 0.04);

        assert!(fisher_score_oracle(&r, &refs, 100, &mut rng).is_err());
    }

    #[test]
    fn score_oracle_error_shrinks_with_samples() {
        // Average the error over a few independent seeds to damp luck.
        let refs = [
            Reference::new(Vector3::x(), 1.0).unwrap(),
            Reference::new(Vector3::new(0.0, 1.0, 1.0), 1.0).unwrap(),
        ];
        let closed = fisher_wahba(&refs).unwrap();
        let err = |n: usize| -> f64 {
            (0..8)
                .map(|s| {
                    let mut rng = seeded(100 + s);
                    let est = fisher_score_oracle(&Rotation::identity(), &refs, n, &mut rng).unwrap();
                    (est.matrix() - closed.matrix()).norm()
                })
                .sum::<f64>()
                / 8.0
        };
        let ratio = err(10_000) / err(1_000_000);
        assert!((5.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn icrlb_examples() {
        let j = InfoMatrix::new(Matrix3::identity() * 100.0).unwrap();
        let b = icrlb(&j, &CovMatrix::zeros()).unwrap();
        assert_relative_eq!(b, Matrix3::identity() * 0.01, epsilon = 1e-15);

        let p = CovMatrix::new(Matrix3::identity() * 0.01).unwrap();
        let b = icrlb(&j, &p).unwrap();
        assert_relative_eq!(b, Matrix3::identity() * (0.01 - 2.0 * (0.02 * 0.01) / 12.0), epsilon = 1e-15);
        assert_relative_eq!(b[(0, 0)], 0.009_966_666_666_666_667, epsilon = 1e-15);

        let sq = icrlb_squared_form(&j, &p).unwrap();
        let m = 1.0 - 0.03 / 12.0 + 0.01 / 12.0;
        assert_relative_eq!(m, 0.998_333_333_333_333_3, epsilon = 1e-15);
        assert_relative_eq!(sq, Matrix3::identity() * (m * m * 0.01), epsilon = 1e-15);
        assert_relative_eq!(sq[(0, 0)], 0.009_966_694_444_444_444, epsilon = 1e-15);
    }

    #[test]
    fn icrlb_rejects_singular_information() {
        let j = fisher_wahba(&[Reference::new(Vector3::z(), 1.0).unwrap()]).unwrap();
        assert!(matches!(icrlb(&j, &CovMatrix::zeros()), Err(Error::SingularInformation(_))));
        assert!(icrlb_squared_form(&j, &CovMatrix::zeros()).is_err());
        assert!(smith_form_check(&j, &CovMatrix::zeros()).is_err());
    }

    /// Term-by-term expansion of `M J⁻¹ M`, written out independently.
    fn expanded_squared_form(j_inv: &Matrix3<f64>, p: &Matrix3<f64>) -> Matrix3<f64> {
        let tr = p.trace();
        let c = p - Matrix3::identity() * tr; // P − Tr(P) I
        j_inv + (c * j_inv + j_inv * c) / 12.0 + c * j_inv * c / 144.0
    }

    #[test]
    fn squared_form_matches_expansion() {
        let mut rng = seeded(14);
        for _ in 0..100 {
            let jm = random_spd(&mut rng, 1.0, 100.0);
            let pm = random_spd(&mut rng, 0.0, 0.3);
            let j = InfoMatrix::new(jm).unwrap();
            let p = CovMatrix::new(pm).unwrap();
            let j_inv = jm.try_inverse().unwrap();
            let sq = icrlb_squared_form(&j, &p).unwrap();
            assert!((sq - expanded_squared_form(&j_inv, p.matrix())).norm() < 1e-12);

            // dropping the 1/144 term recovers the expanded bound
            let c = p.matrix() - Matrix3::identity() * p.trace();
            let diff = sq - icrlb(&j, &p).unwrap();
            assert!((diff - c * j_inv * c / 144.0).norm() < 1e-12);
            // and that difference is PSD
            assert!(loewner_geq(&sq, &icrlb(&j, &p).unwrap(), 1e-12));
        }
    }

    #[test]
    fn squared_form_at_zero_covariance_is_inverse() {
        let mut rng = seeded(15);
        let j = InfoMatrix::new(random_spd(&mut rng, 1.0, 10.0)).unwrap();
        assert_eq!(icrlb_squared_form(&j, &CovMatrix::zeros()).unwrap(), j.inverse().unwrap());
        assert_eq!(icrlb(&j, &CovMatrix::zeros()).unwrap(), j.inverse().unwrap());
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(*curvature_operator(&CovMatrix::zeros()).matrix(), Matrix3::zeros());
        let p = CovMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 0.0))).unwrap();
        assert_eq!(
            *curvature_operator(&p).matrix(),
            Matrix3::from_diagonal(&Vector3::new(0.0, 0.25, 0.25))
        );
        let mut rng = seeded(16);
        for _ in 0..100 {
            let p = CovMatrix::new(random_spd(&mut rng, 0.0, 1.0)).unwrap();
            let r = curvature_operator(&p);
            assert!(min_eigenvalue(r.matrix()) >= -PSD_TOL);
            // P = Tr(P) I − 4 R_m
            let back = Matrix3::identity() * p.trace() - 4.0 * r.matrix();
            assert!((back - p.matrix()).norm() < 1e-12);
        }
    }

    #[test]
    fn smith_form_examples() {
        let j = InfoMatrix::new(Matrix3::identity()).unwrap();
        let p = CovMatrix::new(Matrix3::from_diagonal(&Vector3::new(0.1, 0.2, 0.3))).unwrap();
        assert!(smith_form_check(&j, &p).unwrap() < 1e-13);
        assert_eq!(smith_form_check(&j, &CovMatrix::zeros()).unwrap(), 0.0);

        let mut rng = seeded(17);
        for _ in 0..100 {
            let j = InfoMatrix::new(random_spd(&mut rng, 1.0, 100.0)).unwrap();
            let p = CovMatrix::new(random_spd(&mut rng, 0.0, 0.5)).unwrap();
            assert!(smith_form_check(&j, &p).unwrap() < 1e-12);
        }
    }

    #[test]
    fn loewner_examples() {
        let i = Matrix3::identity();
        assert!(loewner_geq(&i, &i, 1e-9));
        assert!(loewner_geq(&(i * 2.0), &i, 0.0));
        assert!(!loewner_geq(&i, &(i * 2.0), 0.0));
        let a = Matrix3::from_diagonal(&Vector3::new(2.0, 0.5, 1.0));
        assert!(!loewner_geq(&a, &i, 0.0));
        assert!(loewner_geq(&a, &i, 0.5));
    }

    #[test]
    fn newtypes_validate() {
        assert!(CovMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1e-6, 0.0))).is_err());
        let mut m = Matrix3::identity();
        m[(0, 1)] = 0.1;
        assert!(InfoMatrix::new(m).is_err());
        assert!(CovMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, -1e-13, 0.0))).is_ok());
    }

    proptest! {
        #[test]
        fn information_serde_round_trip(a in 0.0f64..10.0, b in 0.0f64..10.0, c in -1.0f64..1.0) {
            let m = Matrix3::new(a + 2.0, c, 0.0, c, b + 2.0, 0.0, 0.0, 0.0, 1.0);
            let j = InfoMatrix::new(m).unwrap();
            let text = serde_json::to_string(&j).unwrap();
            let back: InfoMatrix = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, j);
        }
    }
}
