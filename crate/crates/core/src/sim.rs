//! Fixed-step closed-loop simulation.
//!
//! A scenario couples the plant, the controller, and a reference
//! trajectory at a fixed step `dt`. Commands are held between controller
//! invocations (zero-order hold at `dt × control_decimation`), the
//! vector states advance with a classical RK4 step, and the attitude
//! advances on SO(3) through the exponential map with the step's
//! effective rotation vector (Munthe-Kaas style, with the dexp⁻¹
//! correction carried to second order so the step stays 4th order).
//! Every step the rotation is renormalized.
//!
//! Runs are deterministic: identical config and seed produce
//! bit-identical traces.

use crate::allocation::{allocate, AllocationError};
use crate::controller::{
    control_step, desired_force, desired_moment, find_feasible_constants, validate_gains,
    ControlMode, ControllerState, Gains, TrajectorySample,
};
use crate::geometry::{
    self, angular_velocity_error, attitude_error, exp_rotvec, renormalize, Rotation,
};
use crate::plant::{
    aero_thrust, dcmd_derivative, td_derivative, thrust_to_speed, PlantError, RigidBodyState,
    RotorBank, RotorModel, VehicleParams,
};
use crate::stability::{
    rotational_certificate, translational_certificate, v1, v2, verify_decay, DecayReport,
    LyapunovTrace, RotationalCertificate, TranslationalCertificate,
};
use crate::Vec3;
use std::io::Write;
use thiserror::Error;

/// Norm beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no design constants satisfy the gain inequalities for these gains")]
    GainInfeasible,
    #[error("simulation diverged at t = {at:.6} s")]
    Divergence {
        at: f64,
        /// Trace up to the divergence, for diagnosis.
        trace: Box<TraceLog>,
    },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

/// Reference trajectory selection.
#[derive(Debug, Clone)]
pub enum TrajectorySpec {
    /// Position circles at `position_rate` on a circle of `radius` at
    /// constant `height`, while the desired attitude spins about the
    /// inertial x axis at `attitude_rate`.
    CircleTumble {
        radius: f64,
        height: f64,
        position_rate: f64,
        attitude_rate: f64,
    },
    /// Test-bench scenario: the body is clamped and a single-axis
    /// desired force `F_z,d = amplitude · sin(frequency · t)` drives the
    /// rotors directly.
    ForceSine { amplitude: f64, frequency: f64 },
    /// Hold a fixed position, level.
    Hover { position: Vec3 },
    /// Hold the origin while the desired attitude steps to a roll of
    /// `angle` radians at t = 0.
    StepAttitude { angle: f64 },
}

impl TrajectorySpec {
    /// Circle of radius 1 m at height 1 m, both rates 1 rad/s.
    pub fn default_circle_tumble() -> Self {
        TrajectorySpec::CircleTumble {
            radius: 1.0,
            height: 1.0,
            position_rate: 1.0,
            attitude_rate: 1.0,
        }
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        match *self {
            TrajectorySpec::CircleTumble {
                radius,
                height,
                position_rate,
                attitude_rate,
            } => circle_tumble(t, radius, height, position_rate, attitude_rate),
            TrajectorySpec::ForceSine { .. } => TrajectorySample::hold(Vec3::zeros()),
            TrajectorySpec::Hover { position } => TrajectorySample::hold(position),
            TrajectorySpec::StepAttitude { angle } => {
                let mut sample = TrajectorySample::hold(Vec3::zeros());
                sample.rotation = Rotation::rot_x(angle);
                sample
            }
        }
    }
}

/// Circle-while-tumbling reference at time `t`.
pub fn circle_tumble(
    t: f64,
    radius: f64,
    height: f64,
    position_rate: f64,
    attitude_rate: f64,
) -> TrajectorySample {
    let (s, c) = (position_rate * t).sin_cos();
    TrajectorySample {
        position: Vec3::new(radius * c, radius * s, height),
        velocity: Vec3::new(-radius * position_rate * s, radius * position_rate * c, 0.0),
        acceleration: Vec3::new(
            -radius * position_rate * position_rate * c,
            -radius * position_rate * position_rate * s,
            0.0,
        ),
        rotation: Rotation::rot_x(attitude_rate * t),
        // Rotation about x: the body-frame rate equals the inertial rate.
        omega: Vec3::new(attitude_rate, 0.0, 0.0),
        omega_dot: Vec3::zeros(),
    }
}

/// Single-axis desired force and its analytic derivative:
/// `(A sin(νt), Aν cos(νt))`.
pub fn force_sine(t: f64, amplitude: f64, frequency: f64) -> (f64, f64) {
    (
        amplitude * (frequency * t).sin(),
        amplitude * frequency * (frequency * t).cos(),
    )
}

/// How the rotor states are initialized.
#[derive(Debug, Clone)]
pub enum RotorInit {
    /// Thrusts realize the initial desired wrench (no initial wrench error).
    Warm,
    /// All rotors at zero.
    Cold,
    /// Warm start with an added wrench offset (force, moment): the run
    /// begins with exactly that wrench error.
    WarmWithWrenchOffset(Vec3, Vec3),
}

/// Initial rigid-body state selection.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    /// p = 0, v = 0, R = I, ω = 0.
    Origin,
    /// Start exactly on the reference trajectory.
    OnTrajectory,
    Custom(RigidBodyState),
}

/// Design constants (c₁, c₂) for the Lyapunov machinery.
#[derive(Debug, Clone)]
pub enum GainConstants {
    /// Search with [`find_feasible_constants`].
    Auto,
    Fixed(f64, f64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub plant_model: RotorModel,
    pub controller_mode: ControlMode,
    pub trajectory: TrajectorySpec,
    /// Recorded for reproducibility; runs themselves are deterministic.
    pub seed: u64,
    /// Controller period in integration steps (≥ 1).
    pub control_decimation: usize,
    /// Log every n-th step (≥ 1).
    pub log_decimation: usize,
    pub rotor_init: RotorInit,
    pub initial: InitialCondition,
    pub constants: GainConstants,
    /// Proceed even when the gain inequalities cannot be satisfied.
    pub force_run: bool,
}

impl SimConfig {
    pub fn new(trajectory: TrajectorySpec) -> Self {
        SimConfig {
            dt: 1e-3,
            duration: 10.0,
            plant_model: RotorModel::ThrustDynamics,
            controller_mode: ControlMode::Proposed,
            trajectory,
            seed: 0,
            control_decimation: 1,
            log_decimation: 1,
            rotor_init: RotorInit::Warm,
            initial: InitialCondition::Origin,
            constants: GainConstants::Auto,
            force_run: false,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        // Negated form on purpose: a NaN dt must be rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.dt > 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "dt = {} must be > 0",
                self.dt
            )));
        }
        if self.duration < self.dt {
            return Err(SimError::InvalidConfig(format!(
                "duration {} < dt {}",
                self.duration, self.dt
            )));
        }
        if self.control_decimation == 0 || self.log_decimation == 0 {
            return Err(SimError::InvalidConfig("decimation must be >= 1".into()));
        }
        match self.trajectory {
            TrajectorySpec::CircleTumble {
                radius,
                position_rate,
                attitude_rate,
                ..
            } => {
                if radius <= 0.0 {
                    return Err(SimError::InvalidConfig(format!(
                        "circle radius {radius} must be > 0"
                    )));
                }
                if position_rate < 0.0 || attitude_rate < 0.0 {
                    return Err(SimError::InvalidConfig(
                        "trajectory rates must be >= 0".into(),
                    ));
                }
            }
            TrajectorySpec::ForceSine {
                amplitude,
                frequency,
            } => {
                if amplitude <= 0.0 || frequency <= 0.0 {
                    return Err(SimError::InvalidConfig(
                        "force amplitude and frequency must be > 0".into(),
                    ));
                }
            }
            TrajectorySpec::Hover { .. } | TrajectorySpec::StepAttitude { .. } => {}
        }
        Ok(())
    }
}

/// One logged step.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: f64,
    pub state: RigidBodyState,
    /// Rotor states: thrusts (TD) or speeds (DCMD).
    pub rotors: Vec<f64>,
    pub e_p: Vec3,
    pub e_v: Vec3,
    pub e_r: Vec3,
    pub e_omega: Vec3,
    pub e_f: Vec3,
    pub e_m: Vec3,
    /// Actual body wrench from the rotors.
    pub f: Vec3,
    pub m: Vec3,
    pub f_d: Vec3,
    pub m_d: Vec3,
    /// Held (zero-order-hold) commanded wrench.
    pub f_cmd: Vec3,
    pub m_cmd: Vec3,
    pub psi: f64,
    pub v1: f64,
    pub v2: f64,
    pub v: f64,
}

/// Complete record of a run, at the logging rate.
#[derive(Debug, Clone)]
pub struct TraceLog {
    /// Time between logged rows, s.
    pub dt: f64,
    pub rotor_count: usize,
    /// Which rotor model produced the rotor columns (thrusts or speeds).
    pub rotor_model: RotorModel,
    pub rows: Vec<TraceRow>,
    pub c1: f64,
    pub c2: f64,
    pub psi_bar: f64,
    /// Whether any rotor exceeded the vehicle's f_max (diagnostic only;
    /// no saturation is enforced).
    pub thrust_limit_exceeded: bool,
    pub max_abs_thrust: f64,
}

impl TraceLog {
    pub fn lyapunov_trace(&self) -> LyapunovTrace {
        let mut trace = LyapunovTrace::default();
        for row in &self.rows {
            trace.t.push(row.t);
            trace.v1.push(row.v1);
            trace.v2.push(row.v2);
            trace.v.push(row.v);
            trace
                .z1
                .push([row.e_p.norm(), row.e_v.norm(), row.e_f.norm()]);
            trace
                .z2
                .push([row.e_r.norm(), row.e_omega.norm(), row.e_m.norm()]);
        }
        trace
    }

    /// CSV with one row per logged step; header names carry units in
    /// brackets. Floats carry 17 significant digits so values round-trip
    /// bit-exactly. Column order: t; p; v; R row-major; ω; rotor states;
    /// e_p; e_v; e_R; e_ω; e_F; e_M; F_d; M_d; F_cmd; M_cmd; F; M; Ψ;
    /// V₁; V₂; V.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(
            out,
            "t[s],p_x[m],p_y[m],p_z[m],v_x[m/s],v_y[m/s],v_z[m/s],\
             r_00[-],r_01[-],r_02[-],r_10[-],r_11[-],r_12[-],r_20[-],r_21[-],r_22[-],\
             omega_x[rad/s],omega_y[rad/s],omega_z[rad/s]"
        )?;
        let rotor_unit = match self.rotor_model {
            RotorModel::ThrustDynamics => "N",
            RotorModel::DcMotorDynamics => "rad/s",
        };
        for i in 0..self.rotor_count {
            write!(out, ",rotor_{i}[{rotor_unit}]")?;
        }
        for (name, unit) in [
            ("e_p", "m"),
            ("e_v", "m/s"),
            ("e_r", "-"),
            ("e_omega", "rad/s"),
            ("e_f", "N"),
            ("e_m", "N*m"),
            ("f_d", "N"),
            ("m_d", "N*m"),
            ("f_cmd", "N"),
            ("m_cmd", "N*m"),
            ("f", "N"),
            ("m", "N*m"),
        ] {
            write!(out, ",{name}_x[{unit}],{name}_y[{unit}],{name}_z[{unit}]")?;
        }
        writeln!(out, ",psi[-],v1[J],v2[J],v[J]")?;

        let mut line = String::with_capacity(2048);
        for row in &self.rows {
            line.clear();
            push_float(&mut line, row.t);
            push_vec3(&mut line, &row.state.position);
            push_vec3(&mut line, &row.state.velocity);
            let r = row.state.rotation.matrix();
            for i in 0..3 {
                for j in 0..3 {
                    line.push(',');
                    push_float(&mut line, r[(i, j)]);
                }
            }
            push_vec3(&mut line, &row.state.omega);
            for &value in &row.rotors {
                line.push(',');
                push_float(&mut line, value);
            }
            for v in [
                &row.e_p,
                &row.e_v,
                &row.e_r,
                &row.e_omega,
                &row.e_f,
                &row.e_m,
                &row.f_d,
                &row.m_d,
                &row.f_cmd,
                &row.m_cmd,
                &row.f,
                &row.m,
            ] {
                push_vec3(&mut line, v);
            }
            for value in [row.psi, row.v1, row.v2, row.v] {
                line.push(',');
                push_float(&mut line, value);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn push_float(line: &mut String, value: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, "{value:.16e}");
}

fn push_vec3(line: &mut String, v: &Vec3) {
    use std::fmt::Write as _;
    let _ = write!(line, ",{:.16e},{:.16e},{:.16e}", v.x, v.y, v.z);
}

/// RMS/max of an error-norm series over the full run and its final 20%,
/// plus a settling indicator (first time the norm stays below 5% of its
/// peak).
#[derive(Debug, Clone, Copy)]
pub struct ChannelStats {
    pub rms: f64,
    pub max: f64,
    pub rms_tail: f64,
    pub max_tail: f64,
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub e_p: ChannelStats,
    pub e_v: ChannelStats,
    pub e_r: ChannelStats,
    pub e_omega: ChannelStats,
    pub e_f: ChannelStats,
    pub e_m: ChannelStats,
    pub decay: DecayReport,
}

fn channel_stats(t: &[f64], norms: &[f64]) -> ChannelStats {
    assert!(!norms.is_empty());
    let n = norms.len();
    let tail_start = n * 4 / 5;
    let rms = |s: &[f64]| (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
    let max = |s: &[f64]| s.iter().cloned().fold(0.0f64, f64::max);
    let peak = max(norms);
    let settling_time = if peak > 0.0 {
        let threshold = 0.05 * peak;
        let mut idx = None;
        for k in (0..n).rev() {
            if norms[k] > threshold {
                break;
            }
            idx = Some(k);
        }
        idx.map(|k| t[k])
    } else {
        None
    };
    ChannelStats {
        rms: rms(norms),
        max: peak,
        rms_tail: rms(&norms[tail_start..]),
        max_tail: max(&norms[tail_start..]),
        settling_time,
    }
}

fn compute_metrics(
    trace: &TraceLog,
    tc: &TranslationalCertificate,
    rc: &RotationalCertificate,
) -> Metrics {
    let t: Vec<f64> = trace.rows.iter().map(|r| r.t).collect();
    let series = |f: &dyn Fn(&TraceRow) -> f64| -> Vec<f64> { trace.rows.iter().map(f).collect() };
    let decay = verify_decay(&trace.lyapunov_trace(), tc, rc);
    Metrics {
        e_p: channel_stats(&t, &series(&|r| r.e_p.norm())),
        e_v: channel_stats(&t, &series(&|r| r.e_v.norm())),
        e_r: channel_stats(&t, &series(&|r| r.e_r.norm())),
        e_omega: channel_stats(&t, &series(&|r| r.e_omega.norm())),
        e_f: channel_stats(&t, &series(&|r| r.e_f.norm())),
        e_m: channel_stats(&t, &series(&|r| r.e_m.norm())),
        decay,
    }
}

/// Full integration state: rigid body plus rotor bank.
#[derive(Debug, Clone)]
pub struct SimState {
    pub body: RigidBodyState,
    pub rotors: RotorBank,
}

struct StageDerivative {
    d_position: Vec3,
    d_velocity: Vec3,
    d_phi: Vec3,
    d_omega: Vec3,
    d_rotors: Vec<f64>,
}

/// dexp⁻¹ on so(3) for the body-frame kinematics `Ṙ = R [ω]^` with
/// `R = R₀ exp([φ]^)`, truncated after the second commutator, which is
/// enough for a 4th-order step.
fn dexpinv(phi: &Vec3, omega: &Vec3) -> Vec3 {
    omega + 0.5 * phi.cross(omega) + phi.cross(&phi.cross(omega)) / 12.0
}

#[allow(clippy::too_many_arguments)]
fn stage_derivative(
    base: &SimState,
    f_cmd: &[f64],
    params: &VehicleParams,
    velocity: &Vec3,
    phi: &Vec3,
    omega: &Vec3,
    rotor_values: &[f64],
) -> StageDerivative {
    let rotation = base.body.rotation * exp_rotvec(phi);
    let bank = RotorBank {
        model: base.rotors.model,
        values: rotor_values.to_vec(),
    };
    let thrusts = bank.thrusts(params.aero.mu);
    let (force, moment) = params.allocation().wrench(&thrusts);
    let state = RigidBodyState {
        position: Vec3::zeros(), // dynamics do not depend on position
        velocity: *velocity,
        rotation,
        omega: *omega,
    };
    let body = crate::plant::rigid_body_derivative(&state, &force, &moment, params);
    let alpha = params.alpha;
    let d_rotors = match base.rotors.model {
        RotorModel::ThrustDynamics => rotor_values
            .iter()
            .zip(f_cmd)
            .map(|(&f, &cmd)| td_derivative(f, cmd, alpha))
            .collect(),
        RotorModel::DcMotorDynamics => rotor_values
            .iter()
            .zip(f_cmd)
            .map(|(&w, &cmd)| dcmd_derivative(w, thrust_to_speed(cmd, params.aero.mu), alpha))
            .collect(),
    };
    StageDerivative {
        d_position: body.d_position,
        d_velocity: body.d_velocity,
        d_phi: dexpinv(phi, omega),
        d_omega: body.d_omega,
        d_rotors,
    }
}

/// One classical RK4 step of the full plant under zero-order-hold
/// thrust commands `f_cmd`. The attitude increment is integrated as a
/// rotation vector and applied through the exponential map, then the
/// rotation is renormalized.
pub fn rk4_step(state: &SimState, f_cmd: &[f64], params: &VehicleParams, dt: f64) -> SimState {
    let n = state.rotors.values.len();
    debug_assert_eq!(f_cmd.len(), n);
    let body = &state.body;

    let k1 = stage_derivative(
        state,
        f_cmd,
        params,
        &body.velocity,
        &Vec3::zeros(),
        &body.omega,
        &state.rotors.values,
    );
    let half = 0.5 * dt;

    let v2s = body.velocity + half * k1.d_velocity;
    let phi2 = half * k1.d_phi;
    let w2 = body.omega + half * k1.d_omega;
    let r2: Vec<f64> = (0..n)
        .map(|i| state.rotors.values[i] + half * k1.d_rotors[i])
        .collect();
    let k2 = stage_derivative(state, f_cmd, params, &v2s, &phi2, &w2, &r2);

    let v3s = body.velocity + half * k2.d_velocity;
    let phi3 = half * k2.d_phi;
    let w3 = body.omega + half * k2.d_omega;
    let r3: Vec<f64> = (0..n)
        .map(|i| state.rotors.values[i] + half * k2.d_rotors[i])
        .collect();
    let k3 = stage_derivative(state, f_cmd, params, &v3s, &phi3, &w3, &r3);

    let v4s = body.velocity + dt * k3.d_velocity;
    let phi4 = dt * k3.d_phi;
    let w4 = body.omega + dt * k3.d_omega;
    let r4: Vec<f64> = (0..n)
        .map(|i| state.rotors.values[i] + dt * k3.d_rotors[i])
        .collect();
    let k4 = stage_derivative(state, f_cmd, params, &v4s, &phi4, &w4, &r4);

    let sixth = dt / 6.0;
    let position = body.position
        + sixth * (k1.d_position + 2.0 * k2.d_position + 2.0 * k3.d_position + k4.d_position);
    let velocity = body.velocity
        + sixth * (k1.d_velocity + 2.0 * k2.d_velocity + 2.0 * k3.d_velocity + k4.d_velocity);
    let omega =
        body.omega + sixth * (k1.d_omega + 2.0 * k2.d_omega + 2.0 * k3.d_omega + k4.d_omega);
    let effective_phi = sixth * (k1.d_phi + 2.0 * k2.d_phi + 2.0 * k3.d_phi + k4.d_phi);
    let rotation = renormalize((body.rotation * exp_rotvec(&effective_phi)).matrix())
        .expect("rotation stays on SO(3)");
    let values: Vec<f64> = (0..n)
        .map(|i| {
            state.rotors.values[i]
                + sixth
                    * (k1.d_rotors[i]
                        + 2.0 * k2.d_rotors[i]
                        + 2.0 * k3.d_rotors[i]
                        + k4.d_rotors[i])
        })
        .collect();

    SimState {
        body: RigidBodyState {
            position,
            velocity,
            rotation,
            omega,
        },
        rotors: RotorBank {
            model: state.rotors.model,
            values,
        },
    }
}

/// Classical RK4 for a time-invariant scalar ODE (rotor step responses).
pub fn rk4_scalar(y: f64, dt: f64, f: impl Fn(f64) -> f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * dt * k1);
    let k3 = f(y + 0.5 * dt * k2);
    let k4 = f(y + dt * k3);
    y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Normalized rotor step-response curves for the two rotor models.
#[derive(Debug, Clone)]
pub struct StepResponseLog {
    pub t: Vec<f64>,
    /// Thrust/f_max for the thrust-lag model.
    pub td: Vec<f64>,
    /// Thrust/f_max for the speed-lag model (quadratic composition).
    pub dcmd: Vec<f64>,
}

/// Applies a full-scale thrust-command step to one rotor under each
/// model and records the normalized thrust curves.
pub fn step_response_experiment(
    alpha_f: f64,
    alpha_m: f64,
    dt: f64,
    duration: f64,
) -> StepResponseLog {
    assert!(alpha_f > 0.0 && alpha_m > 0.0 && dt > 0.0 && duration >= dt);
    let mu = 2.5e-6;
    let f_max = 10.0;
    let omega_cmd = thrust_to_speed(f_max, mu);
    let steps = (duration / dt).round() as usize;
    let mut log = StepResponseLog {
        t: Vec::with_capacity(steps + 1),
        td: Vec::with_capacity(steps + 1),
        dcmd: Vec::with_capacity(steps + 1),
    };
    let mut thrust = 0.0;
    let mut speed = 0.0;
    for k in 0..=steps {
        log.t.push(k as f64 * dt);
        log.td.push(thrust / f_max);
        log.dcmd.push(aero_thrust(speed, mu) / f_max);
        thrust = rk4_scalar(thrust, dt, |f| td_derivative(f, f_max, alpha_f));
        speed = rk4_scalar(speed, dt, |w| dcmd_derivative(w, omega_cmd, alpha_m));
    }
    log
}

struct ResolvedConstants {
    c1: f64,
    c2: f64,
    feasible: bool,
}

fn resolve_constants(
    config: &SimConfig,
    params: &VehicleParams,
    gains: &Gains,
    psi_bar: f64,
) -> Result<ResolvedConstants, SimError> {
    let resolved = match config.constants {
        GainConstants::Fixed(c1, c2) => {
            let feasible = validate_gains(gains, c1, c2, params.mass, &params.inertia)
                .map(|r| r.all_satisfied())
                .unwrap_or(false);
            ResolvedConstants { c1, c2, feasible }
        }
        GainConstants::Auto => {
            match find_feasible_constants(
                gains,
                params.mass,
                &params.inertia,
                params.alpha,
                psi_bar,
            ) {
                Some((c1, c2)) => ResolvedConstants {
                    c1,
                    c2,
                    feasible: true,
                },
                None => ResolvedConstants {
                    c1: 0.0,
                    c2: 0.0,
                    feasible: false,
                },
            }
        }
    };
    if !resolved.feasible && !config.force_run {
        return Err(SimError::GainInfeasible);
    }
    Ok(resolved)
}

/// Runs a closed-loop scenario and returns the trace and its metrics.
///
/// Gain feasibility is checked up front (override with
/// [`SimConfig::force_run`]); a state norm beyond [`DIVERGENCE_LIMIT`]
/// aborts with the partial trace attached to the error.
pub fn run_scenario(
    config: &SimConfig,
    params: &VehicleParams,
    gains: &Gains,
) -> Result<(TraceLog, Metrics), SimError> {
    config.validate()?;
    if let TrajectorySpec::ForceSine {
        amplitude,
        frequency,
    } = config.trajectory
    {
        return run_force_bench(config, params, gains, amplitude, frequency);
    }

    let initial_state = match &config.initial {
        InitialCondition::Origin => RigidBodyState::at_rest(),
        InitialCondition::OnTrajectory => {
            let s = config.trajectory.sample(0.0);
            RigidBodyState {
                position: s.position,
                velocity: s.velocity,
                rotation: s.rotation,
                omega: s.omega,
            }
        }
        InitialCondition::Custom(state) => *state,
    };

    let sample0 = config.trajectory.sample(0.0);
    let psi0 = geometry::psi(&initial_state.rotation, &sample0.rotation);
    // Tightest usable bound from the initial condition, kept strictly
    // below 2 (an exactly antipodal start sits outside the certified
    // region; the decay check then reports honestly on the trace).
    let psi_bar = psi0.max(1.9).min(2.0 - 1e-9);
    let constants = resolve_constants(config, params, gains, psi_bar)?;
    let tc = translational_certificate(gains.kp, gains.kv, constants.c1, params.mass, params.alpha);
    let rc = rotational_certificate(
        gains.kr,
        gains.komega,
        constants.c2,
        &params.inertia,
        params.alpha,
        psi_bar,
    );

    // Warm start: rotors realize the initial desired wrench.
    let e_p0 = initial_state.position - sample0.position;
    let e_v0 = initial_state.velocity - sample0.velocity;
    let e_r0 = attitude_error(&initial_state.rotation, &sample0.rotation);
    let e_w0 = angular_velocity_error(
        &initial_state.omega,
        &initial_state.rotation,
        &sample0.rotation,
        &sample0.omega,
    );
    let f_d0 = desired_force(
        &e_p0,
        &e_v0,
        &initial_state.rotation,
        &sample0.acceleration,
        gains,
        params.mass,
        params.gravity,
    );
    let m_d0 = desired_moment(
        &e_r0,
        &e_w0,
        &initial_state.omega,
        &initial_state.rotation,
        &sample0.rotation,
        &sample0.omega,
        &sample0.omega_dot,
        gains,
        &params.inertia,
    );
    let n = params.rotor_count();
    let initial_thrusts = match &config.rotor_init {
        RotorInit::Cold => vec![0.0; n],
        RotorInit::Warm => allocate(&(f_d0, m_d0), params.allocation())?,
        RotorInit::WarmWithWrenchOffset(df, dm) => {
            allocate(&(f_d0 + df, m_d0 + dm), params.allocation())?
        }
    };

    let mut sim = SimState {
        body: initial_state,
        rotors: RotorBank::from_thrusts(config.plant_model, &initial_thrusts, params.aero.mu),
    };
    let mut cstate = ControllerState::new(config.controller_mode);
    let dt_control = config.dt * config.control_decimation as f64;
    let n_steps = (config.duration / config.dt).round() as usize;

    let mut trace = TraceLog {
        dt: config.dt * config.log_decimation as f64,
        rotor_count: n,
        rotor_model: config.plant_model,
        rows: Vec::with_capacity(n_steps / config.log_decimation + 2),
        c1: constants.c1,
        c2: constants.c2,
        psi_bar,
        thrust_limit_exceeded: false,
        max_abs_thrust: 0.0,
    };

    let mut held_f_cmd = Vec3::zeros();
    let mut held_m_cmd = Vec3::zeros();
    let mut rotor_cmd = initial_thrusts;

    for k in 0..=n_steps {
        let t = k as f64 * config.dt;
        let sample = config.trajectory.sample(t);
        let state = sim.body;

        let e_p = state.position - sample.position;
        let e_v = state.velocity - sample.velocity;
        let e_r = attitude_error(&state.rotation, &sample.rotation);
        let e_omega = angular_velocity_error(
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

        if k % config.control_decimation == 0 {
            let out = control_step(&state, &sample, gains, params, &mut cstate, dt_control);
            held_f_cmd = out.f_cmd;
            held_m_cmd = out.m_cmd;
            rotor_cmd = allocate(&(out.f_cmd, out.m_cmd), params.allocation())?;
        }

        let thrusts = sim.rotors.thrusts(params.aero.mu);
        for &f in &thrusts {
            let a = f.abs();
            if a > trace.max_abs_thrust {
                trace.max_abs_thrust = a;
            }
        }
        let (f_w, m_w) = params.allocation().wrench(&thrusts);
        let e_f = f_w - f_d;
        let e_m = m_w - m_d;
        let psi_value = geometry::psi(&state.rotation, &sample.rotation);
        let v1_value = v1(
            &e_p,
            &e_v,
            &e_f,
            gains.kp,
            params.mass,
            params.alpha,
            constants.c1,
        );
        let v2_value = v2(
            &e_r,
            &e_omega,
            &e_m,
            psi_value,
            gains.kr,
            &params.inertia,
            params.alpha,
            constants.c2,
        );

        if k % config.log_decimation == 0 {
            trace.rows.push(TraceRow {
                t,
                state,
                rotors: sim.rotors.values.clone(),
                e_p,
                e_v,
                e_r,
                e_omega,
                e_f,
                e_m,
                f: f_w,
                m: m_w,
                f_d,
                m_d,
                f_cmd: held_f_cmd,
                m_cmd: held_m_cmd,
                psi: psi_value,
                v1: v1_value,
                v2: v2_value,
                v: v1_value + v2_value,
            });
        }

        let rotor_extreme = sim
            .rotors
            .values
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        // Negated form on purpose: NaN must count as divergence.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(state.max_norm() <= DIVERGENCE_LIMIT && rotor_extreme <= DIVERGENCE_LIMIT) {
            trace.thrust_limit_exceeded = trace.max_abs_thrust > params.f_max;
            return Err(SimError::Divergence {
                at: t,
                trace: Box::new(trace),
            });
        }

        if k < n_steps {
            sim = rk4_step(&sim, &rotor_cmd, params, config.dt);
        }
    }

    trace.thrust_limit_exceeded = trace.max_abs_thrust > params.f_max;
    let metrics = compute_metrics(&trace, &tc, &rc);
    Ok((trace, metrics))
}

/// Force test bench: the body is clamped (state held constant) and the
/// desired single-axis force drives the rotors through the controller's
/// force path.
fn run_force_bench(
    config: &SimConfig,
    params: &VehicleParams,
    gains: &Gains,
    amplitude: f64,
    frequency: f64,
) -> Result<(TraceLog, Metrics), SimError> {
    let psi_bar = 1.9;
    let constants = resolve_constants(config, params, gains, psi_bar)?;
    let tc = translational_certificate(gains.kp, gains.kv, constants.c1, params.mass, params.alpha);
    let rc = rotational_certificate(
        gains.kr,
        gains.komega,
        constants.c2,
        &params.inertia,
        params.alpha,
        psi_bar,
    );

    let n = params.rotor_count();
    let mut rotors = RotorBank::from_thrusts(config.plant_model, &vec![0.0; n], params.aero.mu);
    let mut cstate = ControllerState::new(config.controller_mode);
    let dt_control = config.dt * config.control_decimation as f64;
    let n_steps = (config.duration / config.dt).round() as usize;
    let state = RigidBodyState::at_rest();

    let mut trace = TraceLog {
        dt: config.dt * config.log_decimation as f64,
        rotor_count: n,
        rotor_model: config.plant_model,
        rows: Vec::with_capacity(n_steps / config.log_decimation + 2),
        c1: constants.c1,
        c2: constants.c2,
        psi_bar,
        thrust_limit_exceeded: false,
        max_abs_thrust: 0.0,
    };

    let mut held_f_cmd = Vec3::zeros();
    let mut held_m_cmd = Vec3::zeros();
    let mut rotor_cmd = vec![0.0; n];
    let zero = Vec3::zeros();

    for k in 0..=n_steps {
        let t = k as f64 * config.dt;
        let (f_dz, _) = force_sine(t, amplitude, frequency);
        let f_d = Vec3::new(0.0, 0.0, f_dz);

        if k % config.control_decimation == 0 {
            held_f_cmd = cstate.commanded_force(f_d, params.alpha, dt_control);
            held_m_cmd = cstate.commanded_moment(zero, params.alpha, dt_control);
            rotor_cmd = allocate(&(held_f_cmd, held_m_cmd), params.allocation())?;
        }

        let thrusts = rotors.thrusts(params.aero.mu);
        for &f in &thrusts {
            let a = f.abs();
            if a > trace.max_abs_thrust {
                trace.max_abs_thrust = a;
            }
        }
        let (f_w, m_w) = params.allocation().wrench(&thrusts);
        let e_f = f_w - f_d;
        let e_m = m_w;
        let v1_value = v1(
            &zero,
            &zero,
            &e_f,
            gains.kp,
            params.mass,
            params.alpha,
            constants.c1,
        );
        let v2_value = v2(
            &zero,
            &zero,
            &e_m,
            0.0,
            gains.kr,
            &params.inertia,
            params.alpha,
            constants.c2,
        );

        if k % config.log_decimation == 0 {
            trace.rows.push(TraceRow {
                t,
                state,
                rotors: rotors.values.clone(),
                e_p: zero,
                e_v: zero,
                e_r: zero,
                e_omega: zero,
                e_f,
                e_m,
                f: f_w,
                m: m_w,
                f_d,
                m_d: zero,
                f_cmd: held_f_cmd,
                m_cmd: held_m_cmd,
                psi: 0.0,
                v1: v1_value,
                v2: v2_value,
                v: v1_value + v2_value,
            });
        }

        if k < n_steps {
            rotors = rk4_rotors(&rotors, &rotor_cmd, params, config.dt);
        }
    }

    trace.thrust_limit_exceeded = trace.max_abs_thrust > params.f_max;
    let metrics = compute_metrics(&trace, &tc, &rc);
    Ok((trace, metrics))
}

/// RK4 on the rotor bank alone (body clamped).
fn rk4_rotors(rotors: &RotorBank, f_cmd: &[f64], params: &VehicleParams, dt: f64) -> RotorBank {
    let deriv = |values: &[f64]| -> Vec<f64> {
        match rotors.model {
            RotorModel::ThrustDynamics => values
                .iter()
                .zip(f_cmd)
                .map(|(&f, &cmd)| td_derivative(f, cmd, params.alpha))
                .collect(),
            RotorModel::DcMotorDynamics => values
                .iter()
                .zip(f_cmd)
                .map(|(&w, &cmd)| {
                    dcmd_derivative(w, thrust_to_speed(cmd, params.aero.mu), params.alpha)
                })
                .collect(),
        }
    };
    let n = rotors.values.len();
    let k1 = deriv(&rotors.values);
    let y2: Vec<f64> = (0..n)
        .map(|i| rotors.values[i] + 0.5 * dt * k1[i])
        .collect();
    let k2 = deriv(&y2);
    let y3: Vec<f64> = (0..n)
        .map(|i| rotors.values[i] + 0.5 * dt * k2[i])
        .collect();
    let k3 = deriv(&y3);
    let y4: Vec<f64> = (0..n).map(|i| rotors.values[i] + dt * k3[i]).collect();
    let k4 = deriv(&y4);
    RotorBank {
        model: rotors.model,
        values: (0..n)
            .map(|i| rotors.values[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect(),
    }
}

/// Side-by-side run of the proposed and conventional controllers on an
/// otherwise identical configuration.
#[derive(Debug)]
pub struct ComparisonReport {
    pub proposed: Metrics,
    pub conventional: Metrics,
    pub proposed_trace: TraceLog,
    pub conventional_trace: TraceLog,
}

impl ComparisonReport {
    /// RMS ratios conventional/proposed over the final 20% for
    /// (e_p, e_v, e_R, e_ω, e_F, e_M).
    pub fn rms_ratios_tail(&self) -> [(&'static str, f64); 6] {
        let ratio = |c: &ChannelStats, p: &ChannelStats| c.rms_tail / p.rms_tail;
        [
            ("e_p", ratio(&self.conventional.e_p, &self.proposed.e_p)),
            ("e_v", ratio(&self.conventional.e_v, &self.proposed.e_v)),
            ("e_r", ratio(&self.conventional.e_r, &self.proposed.e_r)),
            (
                "e_omega",
                ratio(&self.conventional.e_omega, &self.proposed.e_omega),
            ),
            ("e_f", ratio(&self.conventional.e_f, &self.proposed.e_f)),
            ("e_m", ratio(&self.conventional.e_m, &self.proposed.e_m)),
        ]
    }
}

/// Runs the proposed and the conventional controller on identical
/// configurations (same plant, trajectory, and seed).
pub fn compare_controllers(
    config: &SimConfig,
    params: &VehicleParams,
    gains: &Gains,
) -> Result<ComparisonReport, SimError> {
    let mut proposed_config = config.clone();
    proposed_config.controller_mode = ControlMode::Proposed;
    let mut conventional_config = config.clone();
    conventional_config.controller_mode = ControlMode::Conventional;
    let (proposed_trace, proposed) = run_scenario(&proposed_config, params, gains)?;
    let (conventional_trace, conventional) = run_scenario(&conventional_config, params, gains)?;
    Ok(ComparisonReport {
        proposed,
        conventional,
        proposed_trace,
        conventional_trace,
    })
}
