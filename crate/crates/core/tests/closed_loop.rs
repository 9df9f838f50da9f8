//! Closed-loop invariants that need full simulations: wrench-error
//! contraction bounds, Lyapunov sandwich/derivative bounds along traces,
//! recovery of the lag-free plant as α → 0, and the attitude-error rate
//! bound.

mod common;

use common::{reference_gains, reference_params};
use omnirotor::allocation::allocate;
use omnirotor::geometry::{angular_velocity_error, attitude_error, exp_rotvec, Rotation};
use omnirotor::plant::{RigidBodyState, RotorBank, RotorModel};
use omnirotor::sim::{
    rk4_step, run_scenario, InitialCondition, RotorInit, SimConfig, SimState, TrajectorySpec,
};
use omnirotor::stability::{rotational_certificate, translational_certificate};
use omnirotor::Vec3;

#[test]
fn wrench_errors_contract_at_the_rotor_rate() {
    // With a matched thrust-lag plant the wrench errors obey
    // α ė = −e, so ‖e(t)‖ ≤ ‖e(0)‖ e^{−t/α} up to discretization.
    let alpha = 0.1;
    let params = reference_params(alpha);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::Hover {
        position: Vec3::new(0.0, 0.0, 1.0),
    });
    config.dt = 2e-5;
    config.duration = 0.5;
    config.initial = InitialCondition::OnTrajectory;
    config.log_decimation = 10;
    config.rotor_init =
        RotorInit::WarmWithWrenchOffset(Vec3::new(2.0, -3.0, 1.0), Vec3::new(0.2, 0.1, -0.3));
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    let e_f0 = trace.rows[0].e_f.norm();
    let e_m0 = trace.rows[0].e_m.norm();
    for row in &trace.rows {
        let envelope = (-row.t / alpha).exp() * (1.0 + 1e-3);
        assert!(
            row.e_f.norm() <= e_f0 * envelope + 1e-12,
            "e_F bound violated at t={}: {} > {}",
            row.t,
            row.e_f.norm(),
            e_f0 * envelope
        );
        assert!(
            row.e_m.norm() <= e_m0 * envelope + 1e-12,
            "e_M bound violated at t={}",
            row.t
        );
    }
}

#[test]
fn lyapunov_sandwich_holds_along_trace() {
    let params = reference_params(0.1);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::default_circle_tumble());
    config.plant_model = RotorModel::ThrustDynamics;
    config.duration = 5.0;
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    let tc = translational_certificate(gains.kp, gains.kv, trace.c1, params.mass, params.alpha);
    let rc = rotational_certificate(
        gains.kr,
        gains.komega,
        trace.c2,
        &params.inertia,
        params.alpha,
        trace.psi_bar,
    );
    assert!(tc.valid && rc.valid);
    for row in &trace.rows {
        let z1 = Vec3::new(row.e_p.norm(), row.e_v.norm(), row.e_f.norm());
        let lower = z1.dot(&(tc.m11 * z1));
        let upper = z1.dot(&(tc.m12 * z1));
        assert!(lower <= row.v1 + 1e-9 && row.v1 <= upper + 1e-9);
        if row.psi <= trace.psi_bar {
            let z2 = Vec3::new(row.e_r.norm(), row.e_omega.norm(), row.e_m.norm());
            let lower = z2.dot(&(rc.m21 * z2));
            let upper = z2.dot(&(rc.m22 * z2));
            assert!(lower <= row.v2 + 1e-9 && row.v2 <= upper + 1e-9);
        }
    }
}

#[test]
fn lyapunov_derivative_bounded_by_quadratic_forms() {
    // Finite-difference V̇ ≤ −z₁ᵀW₁z₁ − z₂ᵀW₂z₂ + O(dt) along the
    // tumbling trajectory with the matched thrust-lag plant.
    let params = reference_params(0.1);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::default_circle_tumble());
    config.plant_model = RotorModel::ThrustDynamics;
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    let tc = translational_certificate(gains.kp, gains.kv, trace.c1, params.mass, params.alpha);
    let rc = rotational_certificate(
        gains.kr,
        gains.komega,
        trace.c2,
        &params.inertia,
        params.alpha,
        trace.psi_bar,
    );
    let dt = trace.dt;
    for k in 2..trace.rows.len() - 1 {
        let vdot = (trace.rows[k + 1].v - trace.rows[k - 1].v) / (2.0 * dt);
        let row = &trace.rows[k];
        let z1 = Vec3::new(row.e_p.norm(), row.e_v.norm(), row.e_f.norm());
        let z2 = Vec3::new(row.e_r.norm(), row.e_omega.norm(), row.e_m.norm());
        let bound = -(z1.dot(&(tc.w1 * z1)) + z2.dot(&(rc.w2 * z2)));
        let slack = 10.0 * dt * (1.0 + row.v);
        assert!(
            vdot <= bound + slack,
            "vdot {vdot} > bound {bound} + slack {slack} at t={}",
            row.t
        );
    }
}

#[test]
fn vanishing_rotor_lag_recovers_commanded_wrench() {
    // α = 1e-6 stands in for the lag-free plant: after 10α the wrench
    // matches the command to 0.1%.
    let alpha = 1e-6;
    let params = reference_params(alpha);
    let target = (Vec3::new(3.0, -2.0, 9.81), Vec3::new(0.3, 0.2, -0.1));
    let f_cmd = allocate(&target, params.allocation()).unwrap();
    let mut sim = SimState {
        body: RigidBodyState::at_rest(),
        rotors: RotorBank::from_thrusts(RotorModel::ThrustDynamics, &[0.0; 6], 2.5e-6),
    };
    let dt = 5e-7;
    for _ in 0..20 {
        sim = rk4_step(&sim, &f_cmd, &params, dt);
    }
    let thrusts = sim.rotors.thrusts(2.5e-6);
    let (force, moment) = params.allocation().wrench(&thrusts);
    let target_norm = (target.0.norm_squared() + target.1.norm_squared()).sqrt();
    let error = ((force - target.0).norm_squared() + (moment - target.1).norm_squared()).sqrt();
    assert!(
        error <= 1e-3 * target_norm,
        "wrench error {error} vs target norm {target_norm}"
    );
}

#[test]
fn attitude_error_rate_bounded_by_angular_velocity_error() {
    // ‖ė_R‖ ≤ ‖e_ω‖, checked by finite differences on smooth paths.
    let dt = 1e-5;
    let steps = 20_000;
    let omega_fn = |t: f64| Vec3::new((0.9 * t).cos(), (1.7 * t).sin() - 0.2, 0.4);
    let omega_d_fn = |t: f64| Vec3::new(-0.5, (1.3 * t).cos(), 0.3 * (0.8 * t).sin());
    let mut r = Rotation::rot_x(0.3);
    let mut r_d = Rotation::identity();
    let mut history: Vec<(f64, Rotation, Rotation)> = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        history.push((t, r, r_d));
        r = r * exp_rotvec(&(omega_fn(t + 0.5 * dt) * dt));
        r_d = r_d * exp_rotvec(&(omega_d_fn(t + 0.5 * dt) * dt));
    }
    for k in 1..steps {
        let (_, r_prev, rd_prev) = history[k - 1];
        let (t, r_k, rd_k) = history[k];
        let (_, r_next, rd_next) = history[k + 1];
        let e_r_dot =
            (attitude_error(&r_next, &rd_next) - attitude_error(&r_prev, &rd_prev)) / (2.0 * dt);
        let e_w = angular_velocity_error(&omega_fn(t), &r_k, &rd_k, &omega_d_fn(t));
        assert!(
            e_r_dot.norm() <= e_w.norm() + 10.0 * dt,
            "rate bound violated at t={t}: {} > {}",
            e_r_dot.norm(),
            e_w.norm()
        );
    }
}

#[test]
fn dcmd_thrust_sign_matches_speed_sign_in_closed_loop() {
    let params = reference_params(0.07);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::ForceSine {
        amplitude: 16.0,
        frequency: 4.0 * std::f64::consts::PI / 3.0,
    });
    config.plant_model = RotorModel::DcMotorDynamics;
    config.duration = 3.0;
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    for row in &trace.rows {
        let bank = RotorBank {
            model: RotorModel::DcMotorDynamics,
            values: row.rotors.clone(),
        };
        for (f, w) in bank.thrusts(2.5e-6).iter().zip(&row.rotors) {
            assert!(f * w >= 0.0, "thrust {f} and speed {w} disagree in sign");
        }
    }
}

#[test]
fn decimated_controller_still_tracks() {
    // Control at 200 Hz over a 1 kHz plant: the loop stays stable and
    // converges, if less tightly than the matched-rate loop.
    let params = reference_params(0.1);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::default_circle_tumble());
    config.plant_model = RotorModel::ThrustDynamics;
    config.control_decimation = 5;
    config.duration = 6.0;
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    let tail_e_p = trace
        .rows
        .iter()
        .filter(|r| r.t >= 5.0)
        .map(|r| r.e_p.norm())
        .fold(0.0f64, f64::max);
    assert!(tail_e_p < 0.1, "tail position error {tail_e_p}");
}

#[test]
fn step_attitude_scenario_converges() {
    let params = reference_params(0.1);
    let gains = reference_gains();
    let mut config = SimConfig::new(TrajectorySpec::StepAttitude { angle: 1.0 });
    config.plant_model = RotorModel::ThrustDynamics;
    config.duration = 6.0;
    let (trace, _) = run_scenario(&config, &params, &gains).unwrap();
    let first_psi = trace.rows[0].psi;
    let last_psi = trace.rows.last().unwrap().psi;
    assert!(first_psi > 0.4, "step should start with attitude error");
    assert!(
        last_psi < 1e-4,
        "attitude error should vanish, got {last_psi}"
    );
    let last_e_p = trace.rows.last().unwrap().e_p.norm();
    assert!(last_e_p < 5e-3, "position should hold, got {last_e_p}");
}
