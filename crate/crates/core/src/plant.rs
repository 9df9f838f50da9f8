//! The simulated vehicle.
//!
//! Rigid-body Newton–Euler dynamics
//!
//! ```text
//! ṗ = v,    m v̇ = −mg ẑ_I + R F,    J ω̇ = −ω × Jω + M,    Ṙ = R [ω]^
//! ```
//!
//! driven by rotor thrusts through the allocation map, with two
//! selectable first-order rotor models:
//!
//! - thrust dynamics (TD): `ḟ_i = (f_cmd,i − f_i)/α`, the lag applied
//!   directly to thrust;
//! - DC-motor dynamics (DCMD): `Ω̇_i = (Ω_cmd,i − Ω_i)/α`, the lag on
//!   rotor speed, with thrust following the quadratic aerodynamic map
//!   `f_i = μ sgn(Ω_i) Ω_i²`.

use crate::allocation::{build_allocation, AllocationError, AllocationMatrix, RotorGeometry};
use crate::geometry::Rotation;
use crate::{Mat3, Vec3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("expected {expected} rotor commands, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Which first-order rotor model drives the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotorModel {
    /// First-order lag on thrust.
    ThrustDynamics,
    /// First-order lag on rotor speed; thrust via the quadratic map.
    DcMotorDynamics,
}

/// Propeller aerodynamic coefficients of `f = μ sgn(Ω) Ω²`,
/// `τ = κ sgn(Ω) Ω²`.
#[derive(Debug, Clone, Copy)]
pub struct AeroCoefficients {
    /// Lift coefficient, N·s².
    pub mu: f64,
    /// Drag coefficient, N·m·s². κ/μ is the torque-per-thrust length.
    pub kappa: f64,
}

/// Physical parameters of the vehicle, with the allocation matrix built
/// and cached at construction.
#[derive(Debug, Clone)]
pub struct VehicleParams {
    pub mass: f64,
    pub gravity: f64,
    pub inertia: Mat3,
    inertia_inv: Mat3,
    /// Rotor time constant, s (thrust lag for TD, speed lag for DCMD).
    pub alpha: f64,
    pub aero: AeroCoefficients,
    /// Thrust magnitude above which a run is flagged (not enforced).
    pub f_max: f64,
    pub geometry: RotorGeometry,
    allocation: AllocationMatrix,
}

impl VehicleParams {
    pub fn new(
        mass: f64,
        gravity: f64,
        inertia: Mat3,
        alpha: f64,
        mu: f64,
        f_max: f64,
        geometry: RotorGeometry,
    ) -> Result<Self, PlantError> {
        if mass <= 0.0 {
            return Err(PlantError::InvalidParams(format!("mass {mass} <= 0")));
        }
        if alpha <= 0.0 {
            return Err(PlantError::InvalidParams(format!("alpha {alpha} <= 0")));
        }
        if mu <= 0.0 {
            return Err(PlantError::InvalidParams(format!("mu {mu} <= 0")));
        }
        if (inertia - inertia.transpose()).norm() > 1e-9 {
            return Err(PlantError::InvalidParams("inertia not symmetric".into()));
        }
        let eig = inertia.symmetric_eigenvalues();
        if eig.min() <= 0.0 {
            return Err(PlantError::InvalidParams(
                "inertia not positive definite".into(),
            ));
        }
        let inertia_inv = inertia
            .try_inverse()
            .ok_or_else(|| PlantError::InvalidParams("inertia not invertible".into()))?;
        let kappa = mu * geometry.torque_per_thrust();
        if kappa <= 0.0 {
            return Err(PlantError::InvalidParams(format!(
                "torque per thrust {} <= 0",
                geometry.torque_per_thrust()
            )));
        }
        let allocation = build_allocation(&geometry)?;
        Ok(VehicleParams {
            mass,
            gravity,
            inertia,
            inertia_inv,
            alpha,
            aero: AeroCoefficients { mu, kappa },
            f_max,
            geometry,
            allocation,
        })
    }

    pub fn allocation(&self) -> &AllocationMatrix {
        &self.allocation
    }

    pub fn inertia_inv(&self) -> &Mat3 {
        &self.inertia_inv
    }

    pub fn rotor_count(&self) -> usize {
        self.geometry.rotor_count()
    }
}

/// Pose and twist of the vehicle: position/velocity in the inertial
/// frame, rotation body→inertial, angular velocity in the body frame.
#[derive(Debug, Clone, Copy)]
pub struct RigidBodyState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub rotation: Rotation,
    pub omega: Vec3,
}

impl RigidBodyState {
    /// At the origin, at rest, level.
    pub fn at_rest() -> Self {
        RigidBodyState {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            rotation: Rotation::identity(),
            omega: Vec3::zeros(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.position
            .norm()
            .max(self.velocity.norm())
            .max(self.omega.norm())
    }
}

/// Per-rotor actuator state: thrusts (TD) or speeds (DCMD).
#[derive(Debug, Clone)]
pub struct RotorBank {
    pub model: RotorModel,
    /// Thrusts f_i in N for TD, speeds Ω_i in rad/s for DCMD.
    pub values: Vec<f64>,
}

impl RotorBank {
    /// Bank whose initial wrench realizes `thrusts` under `model`.
    pub fn from_thrusts(model: RotorModel, thrusts: &[f64], mu: f64) -> Self {
        let values = match model {
            RotorModel::ThrustDynamics => thrusts.to_vec(),
            RotorModel::DcMotorDynamics => {
                thrusts.iter().map(|&f| thrust_to_speed(f, mu)).collect()
            }
        };
        RotorBank { model, values }
    }

    /// Current rotor thrusts, N.
    pub fn thrusts(&self, mu: f64) -> Vec<f64> {
        match self.model {
            RotorModel::ThrustDynamics => self.values.clone(),
            RotorModel::DcMotorDynamics => {
                self.values.iter().map(|&w| aero_thrust(w, mu)).collect()
            }
        }
    }
}

/// Propeller thrust `f = μ sgn(Ω) Ω²`, N. Odd in Ω.
pub fn aero_thrust(omega_rotor: f64, mu: f64) -> f64 {
    mu * omega_rotor.signum() * omega_rotor * omega_rotor
}

/// Propeller reaction torque `τ = σ κ sgn(Ω) Ω²`, N·m.
pub fn aero_torque(omega_rotor: f64, kappa: f64, spin_sign: f64) -> f64 {
    spin_sign * kappa * omega_rotor.signum() * omega_rotor * omega_rotor
}

/// Rotor speed producing thrust `f`: `Ω = sgn(f) √(|f|/μ)`, rad/s.
pub fn thrust_to_speed(f: f64, mu: f64) -> f64 {
    f.signum() * (f.abs() / mu).sqrt()
}

/// TD model: `ḟ = (f_cmd − f)/α`, N/s.
pub fn td_derivative(f: f64, f_cmd: f64, alpha: f64) -> f64 {
    (f_cmd - f) / alpha
}

/// DCMD model: `Ω̇ = (Ω_cmd − Ω)/α_m`, rad/s².
pub fn dcmd_derivative(omega_rotor: f64, omega_cmd: f64, alpha_m: f64) -> f64 {
    (omega_cmd - omega_rotor) / alpha_m
}

/// Time derivative of the rigid body state. `Ṙ` is encoded by `omega`
/// for the integrator's exponential-map update.
#[derive(Debug, Clone, Copy)]
pub struct RigidBodyDerivative {
    pub d_position: Vec3,
    pub d_velocity: Vec3,
    pub d_omega: Vec3,
}

/// Newton–Euler derivative under body-frame force `f_body` and moment
/// `m_body`.
pub fn rigid_body_derivative(
    state: &RigidBodyState,
    f_body: &Vec3,
    m_body: &Vec3,
    params: &VehicleParams,
) -> RigidBodyDerivative {
    let gravity = Vec3::new(0.0, 0.0, -params.gravity);
    let d_velocity = gravity + (*state.rotation.matrix() * f_body) / params.mass;
    let gyro = state.omega.cross(&(params.inertia * state.omega));
    let d_omega = params.inertia_inv() * (m_body - gyro);
    RigidBodyDerivative {
        d_position: state.velocity,
        d_velocity,
        d_omega,
    }
}

/// Full plant derivative: rotor lags under the commanded thrusts plus
/// the rigid-body response to the current rotor wrench.
#[derive(Debug, Clone)]
pub struct PlantDerivative {
    pub body: RigidBodyDerivative,
    pub d_rotors: Vec<f64>,
}

pub fn plant_derivative(
    state: &RigidBodyState,
    rotors: &RotorBank,
    f_cmd: &[f64],
    params: &VehicleParams,
) -> Result<PlantDerivative, PlantError> {
    let n = params.rotor_count();
    if f_cmd.len() != n || rotors.values.len() != n {
        return Err(PlantError::DimensionMismatch {
            expected: n,
            got: f_cmd.len().min(rotors.values.len()),
        });
    }
    let thrusts = rotors.thrusts(params.aero.mu);
    let (force, moment) = params.allocation().wrench(&thrusts);
    let body = rigid_body_derivative(state, &force, &moment, params);
    let d_rotors = match rotors.model {
        RotorModel::ThrustDynamics => rotors
            .values
            .iter()
            .zip(f_cmd)
            .map(|(&f, &cmd)| td_derivative(f, cmd, params.alpha))
            .collect(),
        RotorModel::DcMotorDynamics => rotors
            .values
            .iter()
            .zip(f_cmd)
            .map(|(&w, &cmd)| {
                dcmd_derivative(w, thrust_to_speed(cmd, params.aero.mu), params.alpha)
            })
            .collect(),
    };
    Ok(PlantDerivative { body, d_rotors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::default_hex_config;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_params() -> VehicleParams {
        VehicleParams::new(
            1.0,
            9.81,
            Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03)),
            0.1,
            2.5e-6,
            10.0,
            default_hex_config(0.15, 0.15).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn aero_thrust_values() {
        assert_eq!(aero_thrust(0.0, 2.5e-6), 0.0);
        assert_relative_eq!(aero_thrust(2000.0, 2.5e-6), 10.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let w = rng.gen_range(-3000.0..3000.0);
            assert_relative_eq!(
                aero_thrust(-w, 2.5e-6),
                -aero_thrust(w, 2.5e-6),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn aero_torque_tracks_thrust_ratio() {
        assert_eq!(aero_torque(0.0, 1.0, 1.0), 0.0);
        let mu = 2.5e-6;
        let kappa = mu * 0.15;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let w: f64 = rng.gen_range(-3000.0..3000.0);
            if w.abs() < 1.0 {
                continue;
            }
            let spin = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ratio = aero_torque(w, kappa, spin) / aero_thrust(w, mu);
            assert_relative_eq!(ratio, spin * 0.15, epsilon = 1e-12);
        }
        // At f = 10 N the drag torque is 1.5 N·m for κ/μ = 0.15.
        let w = thrust_to_speed(10.0, mu);
        assert_relative_eq!(aero_torque(w, kappa, 1.0), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn thrust_to_speed_round_trip() {
        assert_eq!(thrust_to_speed(0.0, 2.5e-6), 0.0);
        assert_relative_eq!(thrust_to_speed(10.0, 2.5e-6), 2000.0, epsilon = 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let f = rng.gen_range(-10.0..10.0);
            let back = aero_thrust(thrust_to_speed(f, 2.5e-6), 2.5e-6);
            assert_relative_eq!(back, f, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn rotor_derivatives() {
        assert_eq!(td_derivative(3.0, 3.0, 0.1), 0.0);
        assert_relative_eq!(td_derivative(0.0, 1.0, 0.1), 10.0);
        assert_eq!(dcmd_derivative(50.0, 50.0, 0.1), 0.0);
        assert_relative_eq!(dcmd_derivative(0.0, 100.0, 0.1), 1000.0);
    }

    #[test]
    fn hover_is_equilibrium() {
        let params = test_params();
        let state = RigidBodyState::at_rest();
        let f_body = Vec3::new(0.0, 0.0, params.mass * params.gravity);
        let d = rigid_body_derivative(&state, &f_body, &Vec3::zeros(), &params);
        assert_relative_eq!(d.d_position, Vec3::zeros());
        assert_relative_eq!(d.d_velocity, Vec3::zeros(), epsilon = 1e-14);
        assert_relative_eq!(d.d_omega, Vec3::zeros(), epsilon = 1e-14);
    }

    #[test]
    fn free_fall_acceleration() {
        let params = test_params();
        let d = rigid_body_derivative(
            &RigidBodyState::at_rest(),
            &Vec3::zeros(),
            &Vec3::zeros(),
            &params,
        );
        assert_relative_eq!(d.d_velocity, Vec3::new(0.0, 0.0, -9.81), epsilon = 1e-14);
    }

    #[test]
    fn gyroscopic_term() {
        // Spherical inertia: ω × Jω vanishes.
        let params = test_params();
        let mut state = RigidBodyState::at_rest();
        state.omega = Vec3::new(1.0, 1.0, 0.0);
        let d = rigid_body_derivative(&state, &Vec3::zeros(), &Vec3::zeros(), &params);
        assert_relative_eq!(d.d_omega, Vec3::zeros(), epsilon = 1e-14);

        // Non-equal diagonal J: hand-computed ω × Jω = (0, 0, 0.01),
        // so ω̇ = −J⁻¹(ω × Jω) = (0, 0, −0.2).
        let params = VehicleParams::new(
            1.0,
            9.81,
            Mat3::from_diagonal(&Vec3::new(0.02, 0.03, 0.05)),
            0.1,
            2.5e-6,
            10.0,
            default_hex_config(0.15, 0.15).unwrap(),
        )
        .unwrap();
        let d = rigid_body_derivative(&state, &Vec3::zeros(), &Vec3::zeros(), &params);
        assert_relative_eq!(d.d_omega, Vec3::new(0.0, 0.0, -0.2), epsilon = 1e-12);
    }

    #[test]
    fn plant_derivative_checks_dimensions() {
        let params = test_params();
        let rotors = RotorBank::from_thrusts(RotorModel::ThrustDynamics, &[0.0; 6], 2.5e-6);
        let err = plant_derivative(&RigidBodyState::at_rest(), &rotors, &[0.0; 5], &params);
        assert!(matches!(err, Err(PlantError::DimensionMismatch { .. })));
    }

    #[test]
    fn dcmd_thrust_sign_matches_speed_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..200 {
            let w: f64 = rng.gen_range(-3000.0..3000.0);
            let bank = RotorBank {
                model: RotorModel::DcMotorDynamics,
                values: vec![w; 6],
            };
            for f in bank.thrusts(2.5e-6) {
                assert_eq!(f.signum(), w.signum());
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let geometry = default_hex_config(0.15, 0.15).unwrap();
        let j = Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03));
        assert!(VehicleParams::new(0.0, 9.81, j, 0.1, 2.5e-6, 10.0, geometry.clone()).is_err());
        assert!(VehicleParams::new(1.0, 9.81, j, 0.0, 2.5e-6, 10.0, geometry.clone()).is_err());
        let indefinite = Mat3::from_diagonal(&Vec3::new(0.03, -0.03, 0.03));
        assert!(VehicleParams::new(
            1.0,
            9.81,
            indefinite,
            0.1,
            2.5e-6,
            10.0,
            geometry.clone()
        )
        .is_err());
        let no_drag = default_hex_config(0.15, 0.0).unwrap();
        assert!(VehicleParams::new(1.0, 9.81, j, 0.1, 2.5e-6, 10.0, no_drag).is_err());
    }
}
