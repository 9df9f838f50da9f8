//! Geometric tracking control of an omnidirectional multirotor with
//! explicit first-order rotor dynamics.
//!
//! The crate provides:
//!
//! - [`geometry`]: SO(3) primitives (wedge/vee maps, the rotation
//!   exponential, the attitude error function Ψ, and the attitude and
//!   angular-velocity error vectors).
//! - [`allocation`]: rotor geometry, the 6×n allocation matrix mapping
//!   rotor thrusts to a body wrench, its inversion, and the shipped
//!   default six-rotor omnidirectional layout.
//! - [`plant`]: rigid-body Newton–Euler dynamics driven by rotor thrusts,
//!   with two selectable rotor models (first-order thrust lag, or
//!   first-order speed lag with the quadratic aerodynamic map).
//! - [`controller`]: the geometric PD tracking controller with
//!   rotor-lag feedforward, gain feasibility checks, and the
//!   conventional (no-feedforward) baseline.
//! - [`stability`]: Lyapunov candidates, the certificate matrices with
//!   positive-definiteness checks and certified decay rates, and trace
//!   verification of exponential decay.
//! - [`sim`]: fixed-step RK4 closed-loop simulation, trajectory
//!   generators, trace logging with CSV export, and tracking metrics.
//!
//! ## Example
//!
//! ```
//! use omnirotor::allocation::default_hex_config;
//! use omnirotor::controller::Gains;
//! use omnirotor::plant::VehicleParams;
//! use omnirotor::sim::{run_scenario, SimConfig, TrajectorySpec};
//! use omnirotor::{Mat3, Vec3};
//!
//! let params = VehicleParams::new(
//!     1.0,                                              // mass, kg
//!     9.81,                                             // gravity, m/s^2
//!     Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03)), // inertia, kg m^2
//!     0.1,                                              // rotor time constant, s
//!     2.5e-6,                                           // lift coefficient, N s^2
//!     10.0,                                             // thrust flag threshold, N
//!     default_hex_config(0.15, 0.15)?,
//! )?;
//! let gains = Gains::new(3.0, 1.0, 1.0, 1.0);
//! let mut config = SimConfig::new(TrajectorySpec::default_circle_tumble());
//! config.duration = 1.0;
//! let (trace, metrics) = run_scenario(&config, &params, &gains)?;
//! assert_eq!(trace.rows.len(), 1001);
//! assert!(metrics.e_p.rms < 1.5);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod allocation;
pub mod controller;
pub mod geometry;
pub mod plant;
pub mod sim;
pub mod stability;

use nalgebra::{Matrix3, Vector3};

/// 3-vector of f64; used for positions, velocities, forces, moments, errors.
pub type Vec3 = Vector3<f64>;

/// 3×3 matrix of f64; used for inertia tensors and certificate matrices.
pub type Mat3 = Matrix3<f64>;

pub use geometry::Rotation;
