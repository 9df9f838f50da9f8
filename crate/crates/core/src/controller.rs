//! Geometric PD tracking controller with rotor-lag feedforward.
//!
//! Position and attitude are controlled in decoupled loops. The desired
//! force and moment are
//!
//! ```text
//! F_d = Rᵀ(−k_p e_p − k_v e_v + mg ẑ_I + m v̇_d)
//! M_d = −k_R e_R − k_ω e_ω + ω × Jω − J([ω]^ RᵀR_d ω_d − RᵀR_d ω̇_d)
//! ```
//!
//! and the commands add a feedforward on the rotor settling time:
//! `F_cmd = F_d + α Ḟ_d`, `M_cmd = M_d + α Ṁ_d`, with the derivatives
//! realized by first-order backward differences (zero on the first
//! step). The conventional baseline drops the feedforward entirely and
//! sends `F_d`, `M_d` unchanged.
//!
//! No integral action is used: it would amplify the rotor settling time.
//! Gain feasibility follows the two design inequalities
//!
//! ```text
//! k_p > (c₁k_v² + 2c₁k_v − c₁²) / (m(4(k_v − c₁) − 1)),   k_v > c₁ + ¼
//! k_R > c₂k_ω² / (λ_m(4(k_ω − c₂) − 1)),                  k_ω > c₂ + ¼
//! ```
//!
//! with λ_m the smallest eigenvalue of J, under which all six
//! certificate matrices of [`crate::stability`] are positive definite.

use crate::geometry::{self, Rotation};
use crate::plant::{RigidBodyState, VehicleParams};
use crate::stability::{rotational_certificate, translational_certificate};
use crate::{Mat3, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("design constant must be positive: {name} = {value}")]
    NonPositiveConstant { name: &'static str, value: f64 },
}

/// Controller gains, all strictly positive.
#[derive(Debug, Clone, Copy)]
pub struct Gains {
    pub kp: f64,
    pub kv: f64,
    pub kr: f64,
    pub komega: f64,
}

impl Gains {
    pub fn new(kp: f64, kv: f64, kr: f64, komega: f64) -> Self {
        assert!(
            kp > 0.0 && kv > 0.0 && kr > 0.0 && komega > 0.0,
            "gains must be positive"
        );
        Gains { kp, kv, kr, komega }
    }
}

/// One sample of the reference trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajectorySample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub rotation: Rotation,
    /// Desired angular velocity, desired-body frame.
    pub omega: Vec3,
    pub omega_dot: Vec3,
}

impl TrajectorySample {
    /// Stationary sample holding `position` level at rest.
    pub fn hold(position: Vec3) -> Self {
        TrajectorySample {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            rotation: Rotation::identity(),
            omega: Vec3::zeros(),
            omega_dot: Vec3::zeros(),
        }
    }
}

/// Commanded and desired wrench for one control step (body frame).
#[derive(Debug, Clone, Copy)]
pub struct ControlOutput {
    pub f_cmd: Vec3,
    pub m_cmd: Vec3,
    pub f_d: Vec3,
    pub m_d: Vec3,
}

/// Proposed: α-feedforward on the rotor lag. Conventional: none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlMode {
    Proposed,
    Conventional,
}

/// Backward-difference history for Ḟ_d and Ṁ_d. One instance per vehicle.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub mode: ControlMode,
    prev_f_d: Option<Vec3>,
    prev_m_d: Option<Vec3>,
}

impl ControllerState {
    pub fn new(mode: ControlMode) -> Self {
        ControllerState {
            mode,
            prev_f_d: None,
            prev_m_d: None,
        }
    }

    /// `F_cmd = F_d + α Ḟ_d` with Ḟ_d by backward difference (zero on
    /// the first call). Conventional mode passes `F_d` through.
    pub fn commanded_force(&mut self, f_d: Vec3, alpha: f64, dt: f64) -> Vec3 {
        debug_assert!(dt > 0.0);
        let f_dot = match self.prev_f_d.replace(f_d) {
            Some(prev) => (f_d - prev) / dt,
            None => Vec3::zeros(),
        };
        match self.mode {
            ControlMode::Proposed => f_d + alpha * f_dot,
            ControlMode::Conventional => f_d,
        }
    }

    /// `M_cmd = M_d + α Ṁ_d`, mirroring [`Self::commanded_force`].
    pub fn commanded_moment(&mut self, m_d: Vec3, alpha: f64, dt: f64) -> Vec3 {
        debug_assert!(dt > 0.0);
        let m_dot = match self.prev_m_d.replace(m_d) {
            Some(prev) => (m_d - prev) / dt,
            None => Vec3::zeros(),
        };
        match self.mode {
            ControlMode::Proposed => m_d + alpha * m_dot,
            ControlMode::Conventional => m_d,
        }
    }
}

/// `F_d = Rᵀ(−k_p e_p − k_v e_v + mg ẑ_I + m v̇_d)`, body frame.
pub fn desired_force(
    e_p: &Vec3,
    e_v: &Vec3,
    rotation: &Rotation,
    a_d: &Vec3,
    gains: &Gains,
    mass: f64,
    gravity: f64,
) -> Vec3 {
    let inertial =
        -gains.kp * e_p - gains.kv * e_v + Vec3::new(0.0, 0.0, mass * gravity) + mass * a_d;
    rotation.matrix().transpose() * inertial
}

/// `M_d = −k_R e_R − k_ω e_ω + ω × Jω − J([ω]^ RᵀR_d ω_d − RᵀR_d ω̇_d)`.
#[allow(clippy::too_many_arguments)]
pub fn desired_moment(
    e_r: &Vec3,
    e_omega: &Vec3,
    omega: &Vec3,
    rotation: &Rotation,
    rotation_d: &Rotation,
    omega_d: &Vec3,
    omega_dot_d: &Vec3,
    gains: &Gains,
    inertia: &Mat3,
) -> Vec3 {
    let rt_rd = rotation.matrix().transpose() * rotation_d.matrix();
    let transport = omega.cross(&(rt_rd * omega_d)) - rt_rd * omega_dot_d;
    -gains.kr * e_r - gains.komega * e_omega + omega.cross(&(inertia * omega)) - inertia * transport
}

/// One full control step: errors, desired wrench, α-feedforward
/// commands. Updates the backward-difference history in `cstate`;
/// `dt` is the control period.
pub fn control_step(
    state: &RigidBodyState,
    sample: &TrajectorySample,
    gains: &Gains,
    params: &VehicleParams,
    cstate: &mut ControllerState,
    dt: f64,
) -> ControlOutput {
    let e_p = state.position - sample.position;
    let e_v = state.velocity - sample.velocity;
    let e_r = geometry::attitude_error(&state.rotation, &sample.rotation);
    let e_omega = geometry::angular_velocity_error(
        &state.omega,
        &state.rotation,
        &sample.rotation,
        &sample.omega,
    );
    let f_d = desired_force(
        &e_p,
        &e_v,
        &state.rotation,
        &sample.acceleration,
        gains,
        params.mass,
        params.gravity,
    );
    let m_d = desired_moment(
        &e_r,
        &e_omega,
        &state.omega,
        &state.rotation,
        &sample.rotation,
        &sample.omega,
        &sample.omega_dot,
        gains,
        &params.inertia,
    );
    let f_cmd = cstate.commanded_force(f_d, params.alpha, dt);
    let m_cmd = cstate.commanded_moment(m_d, params.alpha, dt);
    ControlOutput {
        f_cmd,
        m_cmd,
        f_d,
        m_d,
    }
}

/// Outcome of checking one of the two gain inequalities.
#[derive(Debug, Clone, Copy)]
pub struct InequalityCheck {
    /// Whether the damping margin (k > c + ¼) holds.
    pub margin_ok: bool,
    /// The evaluated right-hand-side bound on the stiffness gain.
    pub bound: f64,
    /// Whether the stiffness gain exceeds the bound.
    pub stiffness_ok: bool,
}

impl InequalityCheck {
    pub fn satisfied(&self) -> bool {
        self.margin_ok && self.stiffness_ok
    }
}

/// Gain feasibility report for given design constants (c₁, c₂).
#[derive(Debug, Clone, Copy)]
pub struct GainReport {
    pub translational: InequalityCheck,
    pub rotational: InequalityCheck,
    /// Smallest eigenvalue of the inertia tensor.
    pub lambda_min: f64,
}

impl GainReport {
    pub fn all_satisfied(&self) -> bool {
        self.translational.satisfied() && self.rotational.satisfied()
    }
}

/// Evaluates the two gain inequalities for constants `c1`, `c2`.
pub fn validate_gains(
    gains: &Gains,
    c1: f64,
    c2: f64,
    mass: f64,
    inertia: &Mat3,
) -> Result<GainReport, ControllerError> {
    if c1 <= 0.0 {
        return Err(ControllerError::NonPositiveConstant {
            name: "c1",
            value: c1,
        });
    }
    if c2 <= 0.0 {
        return Err(ControllerError::NonPositiveConstant {
            name: "c2",
            value: c2,
        });
    }
    let lambda_min = inertia.symmetric_eigenvalues().min();

    let t_margin = gains.kv > c1 + 0.25;
    let t_denom = mass * (4.0 * (gains.kv - c1) - 1.0);
    let t_bound = (c1 * gains.kv * gains.kv + 2.0 * c1 * gains.kv - c1 * c1) / t_denom;
    let translational = InequalityCheck {
        margin_ok: t_margin,
        bound: t_bound,
        stiffness_ok: t_margin && gains.kp > t_bound,
    };

    let r_margin = gains.komega > c2 + 0.25;
    let r_denom = lambda_min * (4.0 * (gains.komega - c2) - 1.0);
    let r_bound = c2 * gains.komega * gains.komega / r_denom;
    let rotational = InequalityCheck {
        margin_ok: r_margin,
        bound: r_bound,
        stiffness_ok: r_margin && gains.kr > r_bound,
    };

    Ok(GainReport {
        translational,
        rotational,
        lambda_min,
    })
}

/// Grid resolution of [`find_feasible_constants`].
const CONSTANT_GRID: usize = 1000;

/// Searches for design constants (c₁, c₂) over c ∈ (0, min(k_v, k_ω) − ¼)
/// that satisfy both gain inequalities with all certificate matrices
/// positive definite, maximizing the certified decay rate of each
/// subsystem (ties broken toward the smaller constant). Returns `None`
/// when no feasible pair exists.
pub fn find_feasible_constants(
    gains: &Gains,
    mass: f64,
    inertia: &Mat3,
    alpha: f64,
    psi_bar: f64,
) -> Option<(f64, f64)> {
    let upper = gains.kv.min(gains.komega) - 0.25;
    if upper <= 0.0 {
        return None;
    }
    let mut best_c1: Option<(f64, f64)> = None; // (rate, c)
    let mut best_c2: Option<(f64, f64)> = None;
    for k in 1..CONSTANT_GRID {
        let c = upper * k as f64 / CONSTANT_GRID as f64;
        let report = validate_gains(gains, c, c, mass, inertia).expect("c > 0");
        if report.translational.satisfied() {
            let cert = translational_certificate(gains.kp, gains.kv, c, mass, alpha);
            if cert.valid && best_c1.is_none_or(|(rate, _)| cert.decay_rate > rate) {
                best_c1 = Some((cert.decay_rate, c));
            }
        }
        if report.rotational.satisfied() {
            let cert = rotational_certificate(gains.kr, gains.komega, c, inertia, alpha, psi_bar);
            if cert.valid && best_c2.is_none_or(|(rate, _)| cert.decay_rate > rate) {
                best_c2 = Some((cert.decay_rate, c));
            }
        }
    }
    match (best_c1, best_c2) {
        (Some((_, c1)), Some((_, c2))) => Some((c1, c2)),
        _ => None,
    }
}
