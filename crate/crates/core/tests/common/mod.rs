//! Shared fixtures for the integration suites.
//!
//! Each suite uses a subset of these helpers.
#![allow(dead_code)]

use omnirotor::allocation::default_hex_config;
use omnirotor::controller::Gains;
use omnirotor::geometry::{exp_rotvec, Rotation};
use omnirotor::plant::VehicleParams;
use omnirotor::{Mat3, Vec3};
use rand::Rng;

/// Reference vehicle: 1 kg, spherical inertia 0.03 kg·m², 0.15 m arms,
/// κ/μ = 0.15, f_max = 10 N.
pub fn reference_params(alpha: f64) -> VehicleParams {
    VehicleParams::new(
        1.0,
        9.81,
        Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03)),
        alpha,
        2.5e-6,
        10.0,
        default_hex_config(0.15, 0.15).unwrap(),
    )
    .unwrap()
}

/// Reference gains kp = 3, kv = kR = kω = 1.
pub fn reference_gains() -> Gains {
    Gains::new(3.0, 1.0, 1.0, 1.0)
}

pub fn random_unit_vec3(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    let axis = random_unit_vec3(rng);
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    exp_rotvec(&(axis * angle))
}
