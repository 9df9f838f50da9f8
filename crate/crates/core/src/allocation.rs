//! Rotor geometry and control allocation.
//!
//! Each rotor contributes a thrust `f_i ẑ_i` at position `l_i` plus a
//! reaction torque `τ_i ẑ_i = σ_i (κ/μ) f_i ẑ_i`, so the body wrench is
//!
//! ```text
//! F = Σ f_i ẑ_i,    M = Σ (l_i × f_i ẑ_i + τ_i ẑ_i),
//! ```
//!
//! i.e. `[F; M] = A f` with the 6×n allocation matrix `A` whose i-th
//! column is `[ẑ_i ; l_i × ẑ_i + σ_i (κ/μ) ẑ_i]`. `A` must have rank 6
//! for omnidirectional flight; allocation inverts it (exactly for n = 6,
//! minimum-norm for n > 6).

use crate::Vec3;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Unit-axis tolerance for rotor thrust directions.
const AXIS_TOL: f64 = 1e-9;

/// Relative singular-value cutoff used for the numerical rank of `A`.
const RANK_TOL: f64 = 1e-12;

/// Default upper bound on the allocation condition number.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e3;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("rotor {index} axis is not unit length (norm {norm})")]
    AxisNotUnit { index: usize, norm: f64 },
    #[error("{count} rotors is too few for a {directionality:?} geometry (need {required})")]
    TooFewRotors {
        count: usize,
        required: usize,
        directionality: Directionality,
    },
    #[error("rotor {index} spin sign must be +1 or -1, got {value}")]
    BadSpinSign { index: usize, value: f64 },
    #[error(
        "allocation matrix is rank deficient: rank {rank} < 6 (geometry is not omnidirectional)"
    )]
    RankDeficient { rank: usize },
    #[error("allocation matrix condition number {condition:.3e} exceeds bound {bound:.3e}")]
    IllConditioned { condition: f64, bound: f64 },
    #[error("allocation matrix is numerically singular")]
    SingularMatrix,
    #[error("wrench requires negative thrust f_{index} = {value:.6} on a unidirectional rotor")]
    InfeasibleForUnidirectional { index: usize, value: f64 },
}

/// Whether rotors can produce thrust of both signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directionality {
    /// Thrust constrained to f_i ≥ 0; needs at least 7 rotors.
    Unidirectional,
    /// Thrust of either sign (spin reversal); needs at least 6 rotors.
    Bidirectional,
}

/// One rotor: position from the CoM, unit thrust axis, spin sign (all body frame).
#[derive(Debug, Clone, Copy)]
pub struct Rotor {
    /// Position of the rotor from the CoM, m.
    pub position: Vec3,
    /// Unit thrust axis.
    pub axis: Vec3,
    /// Spin sign σ_i ∈ {+1, −1} multiplying the reaction torque.
    pub spin: f64,
}

/// Full rotor layout plus the torque-per-thrust ratio κ/μ (m).
#[derive(Debug, Clone)]
pub struct RotorGeometry {
    rotors: Vec<Rotor>,
    directionality: Directionality,
    torque_per_thrust: f64,
}

impl RotorGeometry {
    pub fn new(
        rotors: Vec<Rotor>,
        directionality: Directionality,
        torque_per_thrust: f64,
    ) -> Result<Self, AllocationError> {
        let required = match directionality {
            Directionality::Bidirectional => 6,
            Directionality::Unidirectional => 7,
        };
        if rotors.len() < required {
            return Err(AllocationError::TooFewRotors {
                count: rotors.len(),
                required,
                directionality,
            });
        }
        for (index, rotor) in rotors.iter().enumerate() {
            let norm = rotor.axis.norm();
            if (norm - 1.0).abs() > AXIS_TOL {
                return Err(AllocationError::AxisNotUnit { index, norm });
            }
            if rotor.spin != 1.0 && rotor.spin != -1.0 {
                return Err(AllocationError::BadSpinSign {
                    index,
                    value: rotor.spin,
                });
            }
        }
        Ok(RotorGeometry {
            rotors,
            directionality,
            torque_per_thrust,
        })
    }

    pub fn rotors(&self) -> &[Rotor] {
        &self.rotors
    }

    pub fn rotor_count(&self) -> usize {
        self.rotors.len()
    }

    pub fn directionality(&self) -> Directionality {
        self.directionality
    }

    /// κ/μ: reaction torque per unit thrust, m.
    pub fn torque_per_thrust(&self) -> f64 {
        self.torque_per_thrust
    }

    pub fn spin_signs(&self) -> Vec<f64> {
        self.rotors.iter().map(|r| r.spin).collect()
    }
}

/// The 6×n map from rotor thrusts to body wrench, with its inverse
/// (exact for n = 6, minimum-norm pseudo-inverse for n > 6) cached.
#[derive(Debug, Clone)]
pub struct AllocationMatrix {
    a: DMatrix<f64>,
    inverse: DMatrix<f64>,
    condition_number: f64,
    unidirectional: bool,
}

impl AllocationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rotor_count(&self) -> usize {
        self.a.ncols()
    }

    /// σ_max/σ_min over the six singular values.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Body wrench `[F; M] = A f` produced by the thrust vector `f`.
    pub fn wrench(&self, thrusts: &[f64]) -> (Vec3, Vec3) {
        debug_assert_eq!(thrusts.len(), self.a.ncols());
        let mut w = [0.0; 6];
        for (j, &f) in thrusts.iter().enumerate() {
            for (i, w_i) in w.iter_mut().enumerate() {
                *w_i += self.a[(i, j)] * f;
            }
        }
        (Vec3::new(w[0], w[1], w[2]), Vec3::new(w[3], w[4], w[5]))
    }
}

/// Builds the allocation matrix for `geometry`, certifying rank 6 and
/// conditioning below [`DEFAULT_CONDITION_BOUND`].
pub fn build_allocation(geometry: &RotorGeometry) -> Result<AllocationMatrix, AllocationError> {
    build_allocation_with_bound(geometry, DEFAULT_CONDITION_BOUND)
}

/// [`build_allocation`] with an explicit condition-number bound.
pub fn build_allocation_with_bound(
    geometry: &RotorGeometry,
    condition_bound: f64,
) -> Result<AllocationMatrix, AllocationError> {
    let n = geometry.rotor_count();
    let kappa_over_mu = geometry.torque_per_thrust();
    let mut a = DMatrix::zeros(6, n);
    for (j, rotor) in geometry.rotors().iter().enumerate() {
        let force = rotor.axis;
        let moment = rotor.position.cross(&rotor.axis) + rotor.spin * kappa_over_mu * rotor.axis;
        for i in 0..3 {
            a[(i, j)] = force[i];
            a[(i + 3, j)] = moment[i];
        }
    }

    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * RANK_TOL)
        .count();
    if rank < 6 {
        return Err(AllocationError::RankDeficient { rank });
    }
    let smin = svd.singular_values.iter().cloned().fold(f64::MAX, f64::min);
    let condition_number = smax / smin;
    if !condition_number.is_finite() || condition_number > condition_bound {
        return Err(AllocationError::IllConditioned {
            condition: condition_number,
            bound: condition_bound,
        });
    }

    let inverse = if n == 6 {
        a.clone()
            .try_inverse()
            .ok_or(AllocationError::SingularMatrix)?
    } else {
        // Minimum-norm right inverse Aᵀ(AAᵀ)⁻¹.
        let aat = &a * a.transpose();
        let aat_inv = aat.try_inverse().ok_or(AllocationError::SingularMatrix)?;
        a.transpose() * aat_inv
    };

    Ok(AllocationMatrix {
        a,
        inverse,
        condition_number,
        unidirectional: geometry.directionality() == Directionality::Unidirectional,
    })
}

/// Solves `A f = w_cmd` for the rotor thrust commands.
///
/// For n = 6 this is the exact inverse; for n > 6 the minimum-norm
/// solution. A unidirectional geometry rejects solutions with any
/// negative component.
pub fn allocate(
    w_cmd: &(Vec3, Vec3),
    allocation: &AllocationMatrix,
) -> Result<Vec<f64>, AllocationError> {
    let (force, moment) = w_cmd;
    let w = DVector::from_column_slice(&[force.x, force.y, force.z, moment.x, moment.y, moment.z]);
    let f = &allocation.inverse * w;
    if allocation.unidirectional {
        for (index, &value) in f.iter().enumerate() {
            if value < -1e-12 {
                return Err(AllocationError::InfeasibleForUnidirectional { index, value });
            }
        }
    }
    Ok(f.iter().cloned().collect())
}

/// The shipped six-rotor omnidirectional layout.
///
/// Rotor arms lie in the body plane at 60° spacing on a circle of radius
/// `arm_length`; every thrust axis is tilted radially outward from body z
/// by atan(√2) ≈ 54.74°, which spreads the six axes isotropically over
/// force directions (Σ ẑ_i ẑ_iᵀ = 2 I). Spin signs alternate around the
/// hexagon, so the layout is symmetric under 120° rotation about body z.
/// Rank and conditioning are certified numerically by [`build_allocation`].
pub fn default_hex_config(
    arm_length: f64,
    torque_per_thrust: f64,
) -> Result<RotorGeometry, AllocationError> {
    assert!(arm_length > 0.0, "arm length must be positive");
    let tilt = (2.0_f64).sqrt().atan();
    let (sin_t, cos_t) = tilt.sin_cos();
    let rotors = (0..6)
        .map(|i| {
            let azimuth = std::f64::consts::FRAC_PI_3 * i as f64;
            let (s, c) = azimuth.sin_cos();
            Rotor {
                position: arm_length * Vec3::new(c, s, 0.0),
                axis: Vec3::new(sin_t * c, sin_t * s, cos_t),
                spin: if i % 2 == 0 { 1.0 } else { -1.0 },
            }
        })
        .collect();
    RotorGeometry::new(rotors, Directionality::Bidirectional, torque_per_thrust)
}
