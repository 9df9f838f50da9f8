//! SO(3) primitives.
//!
//! Rotations are represented by 3×3 matrices constrained to SO(3)
//! (the [`Rotation`] newtype). The wedge/vee pair maps between ℝ³ and
//! skew-symmetric matrices, `exp_so3` is the Rodrigues exponential used
//! by the integrator, and `psi`/`attitude_error`/`angular_velocity_error`
//! implement the attitude error function Ψ(R, R_d) = ½ tr(I − R_dᵀR) and
//! the error vectors
//!
//! ```text
//! e_R = ½ [R_dᵀR − RᵀR_d]∨,    e_ω = ω − RᵀR_d ω_d.
//! ```
//!
//! Ψ lies in [0, 2], reaching 2 exactly at a 180° attitude error, and
//! satisfies ½‖e_R‖² ≤ Ψ ≤ ‖e_R‖²/(2 − ψ) whenever Ψ ≤ ψ < 2.

use crate::{Mat3, Vec3};
use thiserror::Error;

/// Frobenius-norm tolerance for the SO(3) membership checks.
pub const ROTATION_TOL: f64 = 1e-9;

/// Tolerance on ‖M + Mᵀ‖_F below which a matrix is accepted as skew-symmetric.
pub const SKEW_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// `vee` was handed a matrix that is not skew-symmetric within [`SKEW_TOL`].
    #[error("matrix is not skew-symmetric: ||M + M^T|| = {defect:.3e}")]
    NonSkewInput { defect: f64 },
    /// `Rotation::from_matrix` input violates the SO(3) invariants.
    #[error("matrix is not a rotation: orthogonality defect {defect:.3e}, det {det:.6}")]
    NotARotation { defect: f64, det: f64 },
    /// `renormalize` input has non-positive determinant or is rank-deficient.
    #[error("matrix cannot be projected onto SO(3): det = {det:.3e}")]
    DegenerateInput { det: f64 },
}

/// A rotation matrix, i.e. an element of SO(3).
///
/// Invariants (enforced by [`Rotation::from_matrix`], preserved by all
/// operations in this module): ‖RᵀR − I‖_F ≤ 1e-9 and |det R − 1| ≤ 1e-9.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates the SO(3) invariants and wraps the matrix.
    pub fn from_matrix(m: Mat3) -> Result<Self, GeometryError> {
        let defect = orthogonality_defect(&m);
        let det = m.determinant();
        if defect > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotARotation { defect, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller guarantees to be a rotation (e.g. a
    /// product of rotations). Debug builds still check.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        debug_assert!(orthogonality_defect(&m) < 1e-6, "matrix far from SO(3)");
        Rotation(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    /// Rotation by `angle` (rad) about the body x-axis.
    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    /// Rotation by `angle` (rad) about the body y-axis.
    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Rotation by `angle` (rad) about the body z-axis.
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// ‖RᵀR − I‖_F, zero for an exact rotation.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

fn orthogonality_defect(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Wedge operator: maps `v` to the skew-symmetric matrix `[v]^` with
/// `[v]^ u = v × u`.
pub fn wedge(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Vee operator, inverse of [`wedge`]. Errors unless `‖M + Mᵀ‖_F ≤ 1e-9`.
pub fn vee(m: &Mat3) -> Result<Vec3, GeometryError> {
    let defect = (m + m.transpose()).norm();
    if defect > SKEW_TOL {
        return Err(GeometryError::NonSkewInput { defect });
    }
    Ok(vee_unchecked(m))
}

/// Vee of the antisymmetric part, no symmetry check.
fn vee_unchecked(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues exponential of the rotation vector `phi` (axis × angle, rad).
pub fn exp_rotvec(phi: &Vec3) -> Rotation {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    // sin θ/θ and (1 − cos θ)/θ² with series fallbacks near zero.
    let (a, b) = if theta < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let hat = wedge(phi);
    Rotation::from_matrix_unchecked(Mat3::identity() + a * hat + b * (hat * hat))
}

/// Exponential-map integrator update for `Ṙ = R [ω]^` over `dt ≥ 0` seconds:
/// returns `exp([ω dt]^)`.
pub fn exp_so3(omega: &Vec3, dt: f64) -> Rotation {
    exp_rotvec(&(omega * dt))
}

/// Attitude error function `Ψ(R, R_d) = ½ tr(I − R_dᵀ R)`, clamped to [0, 2]
/// to absorb rounding.
pub fn psi(r: &Rotation, r_d: &Rotation) -> f64 {
    let m = r_d.matrix().transpose() * r.matrix();
    (0.5 * (3.0 - m.trace())).clamp(0.0, 2.0)
}

/// Attitude error vector `e_R = ½ [R_dᵀR − RᵀR_d]∨`.
pub fn attitude_error(r: &Rotation, r_d: &Rotation) -> Vec3 {
    let m = r_d.matrix().transpose() * r.matrix();
    // m − mᵀ is skew by construction.
    0.5 * vee_unchecked(&(m - m.transpose()))
}

/// Angular velocity error `e_ω = ω − RᵀR_d ω_d` (body frame).
pub fn angular_velocity_error(omega: &Vec3, r: &Rotation, r_d: &Rotation, omega_d: &Vec3) -> Vec3 {
    omega - r.matrix().transpose() * r_d.matrix() * omega_d
}

/// Projects an approximate rotation onto SO(3) (polar projection: the
/// nearest orthonormal matrix in Frobenius norm).
///
/// For inputs already close to SO(3) a Newton iteration
/// `R ← ½ R (3I − RᵀR)` converges quadratically to the polar factor;
/// otherwise an SVD is used. Inputs with `det ≤ 0` or vanishing singular
/// values are rejected.
pub fn renormalize(m: &Mat3) -> Result<Rotation, GeometryError> {
    let det = m.determinant();
    if det <= 0.0 {
        return Err(GeometryError::DegenerateInput { det });
    }
    if orthogonality_defect(m) < 1e-3 {
        let mut r = *m;
        for _ in 0..3 {
            r = 0.5 * r * (3.0 * Mat3::identity() - r.transpose() * r);
            if orthogonality_defect(&r) < 1e-15 {
                break;
            }
        }
        return Ok(Rotation(r));
    }
    let svd = m.svd(true, true);
    let smin = svd.singular_values.min();
    if smin < 1e-12 {
        return Err(GeometryError::DegenerateInput { det });
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * v_t;
    // det > 0 and full rank guarantee the polar factor is a proper rotation.
    debug_assert!(r.determinant() > 0.0);
    Ok(Rotation(r))
}
