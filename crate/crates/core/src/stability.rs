//! Lyapunov certificates for the closed loop.
//!
//! The translational subsystem uses
//!
//! ```text
//! V₁ = ½k_p‖e_p‖² + ½m‖e_v‖² + ½α‖e_F‖² + c₁ e_p·e_v
//! ```
//!
//! which is sandwiched as `z₁ᵀM₁₁z₁ ≤ V₁ ≤ z₁ᵀM₁₂z₁` for
//! `z₁ = [‖e_p‖, ‖e_v‖, ‖e_F‖]`, with `V̇₁ ≤ −z₁ᵀW₁z₁`. The rotational
//! subsystem uses
//!
//! ```text
//! V₂ = ½ e_ω·J e_ω + k_R Ψ(R, R_d) + ½α‖e_M‖² + c₂ e_R·e_ω
//! ```
//!
//! sandwiched by M₂₁/M₂₂ for `z₂ = [‖e_R‖, ‖e_ω‖, ‖e_M‖]` whenever
//! `Ψ ≤ ψ < 2`, with `V̇₂ ≤ −z₂ᵀW₂z₂`. When every matrix is positive
//! definite the combined `V = V₁ + V₂` decays at least at the certified
//! rate `β = min(λ_min(W₁)/λ_max(M₁₂), λ_min(W₂)/λ_max(M₂₂))`. The rate
//! itself is a derived certificate: the stability analysis proves
//! exponential decay without naming a constant, so `β` is the standard
//! eigenvalue quotient and is labeled as derived in reports.

use crate::{Mat3, Vec3};

/// Eigenvalue threshold for positive definiteness.
pub const PD_EIGENVALUE_TOL: f64 = 1e-12;

/// Certificate for the translational error subsystem (e_p, e_v, e_F).
#[derive(Debug, Clone)]
pub struct TranslationalCertificate {
    pub c1: f64,
    pub m11: Mat3,
    pub m12: Mat3,
    pub w1: Mat3,
    /// All three matrices positive definite.
    pub valid: bool,
    /// Certified decay rate λ_min(W₁)/λ_max(M₁₂), 1/s.
    pub decay_rate: f64,
}

/// Certificate for the rotational error subsystem (e_R, e_ω, e_M),
/// valid on the region Ψ ≤ ψ < 2.
#[derive(Debug, Clone)]
pub struct RotationalCertificate {
    pub c2: f64,
    pub psi_bar: f64,
    pub m21: Mat3,
    pub m22: Mat3,
    pub w2: Mat3,
    pub valid: bool,
    /// Certified decay rate λ_min(W₂)/λ_max(M₂₂), 1/s.
    pub decay_rate: f64,
}

/// `V₁ = ½k_p‖e_p‖² + ½m‖e_v‖² + ½α‖e_F‖² + c₁ e_p·e_v`.
pub fn v1(e_p: &Vec3, e_v: &Vec3, e_f: &Vec3, kp: f64, mass: f64, alpha: f64, c1: f64) -> f64 {
    0.5 * kp * e_p.norm_squared()
        + 0.5 * mass * e_v.norm_squared()
        + 0.5 * alpha * e_f.norm_squared()
        + c1 * e_p.dot(e_v)
}

/// `V₂ = ½ e_ω·J e_ω + k_R Ψ + ½α‖e_M‖² + c₂ e_R·e_ω`.
#[allow(clippy::too_many_arguments)]
pub fn v2(
    e_r: &Vec3,
    e_omega: &Vec3,
    e_m: &Vec3,
    psi_value: f64,
    kr: f64,
    inertia: &Mat3,
    alpha: f64,
    c2: f64,
) -> f64 {
    0.5 * e_omega.dot(&(inertia * e_omega))
        + kr * psi_value
        + 0.5 * alpha * e_m.norm_squared()
        + c2 * e_r.dot(e_omega)
}

/// Symmetrizes and checks that every eigenvalue exceeds
/// [`PD_EIGENVALUE_TOL`].
pub fn is_positive_definite(m: &Mat3) -> bool {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues().min() > PD_EIGENVALUE_TOL
}

fn eig_min(m: &Mat3) -> f64 {
    (0.5 * (m + m.transpose())).symmetric_eigenvalues().min()
}

fn eig_max(m: &Mat3) -> f64 {
    (0.5 * (m + m.transpose())).symmetric_eigenvalues().max()
}

/// Builds M₁₁, M₁₂, W₁ and the certified translational decay rate.
pub fn translational_certificate(
    kp: f64,
    kv: f64,
    c1: f64,
    mass: f64,
    alpha: f64,
) -> TranslationalCertificate {
    let m11 = 0.5 * Mat3::new(kp, -c1, 0.0, -c1, mass, 0.0, 0.0, 0.0, alpha);
    let m12 = 0.5 * Mat3::new(kp, c1, 0.0, c1, mass, 0.0, 0.0, 0.0, alpha);
    let w1 = Mat3::new(
        c1 * kp / mass,
        -c1 * kv / (2.0 * mass),
        -c1 / (2.0 * mass),
        -c1 * kv / (2.0 * mass),
        kv - c1,
        -0.5,
        -c1 / (2.0 * mass),
        -0.5,
        1.0,
    );
    let valid =
        is_positive_definite(&m11) && is_positive_definite(&m12) && is_positive_definite(&w1);
    let decay_rate = if valid {
        eig_min(&w1) / eig_max(&m12)
    } else {
        0.0
    };
    TranslationalCertificate {
        c1,
        m11,
        m12,
        w1,
        valid,
        decay_rate,
    }
}

/// Builds M₂₁, M₂₂, W₂ and the certified rotational decay rate for the
/// region Ψ ≤ `psi_bar` < 2.
pub fn rotational_certificate(
    kr: f64,
    komega: f64,
    c2: f64,
    inertia: &Mat3,
    alpha: f64,
    psi_bar: f64,
) -> RotationalCertificate {
    let eigs = inertia.symmetric_eigenvalues();
    let (lambda_min, lambda_max) = (eigs.min(), eigs.max());
    let m21 = 0.5 * Mat3::new(kr, -c2, 0.0, -c2, lambda_min, 0.0, 0.0, 0.0, alpha);
    let m22 = 0.5
        * Mat3::new(
            2.0 * kr / (2.0 - psi_bar),
            c2,
            0.0,
            c2,
            lambda_max,
            0.0,
            0.0,
            0.0,
            alpha,
        );
    let w2 = Mat3::new(
        c2 * kr / lambda_min,
        c2 * komega / (2.0 * lambda_min),
        -c2 / (2.0 * lambda_max),
        c2 * komega / (2.0 * lambda_min),
        komega - c2,
        -0.5,
        -c2 / (2.0 * lambda_max),
        -0.5,
        1.0,
    );
    let valid = psi_bar < 2.0
        && is_positive_definite(&m21)
        && is_positive_definite(&m22)
        && is_positive_definite(&w2);
    let decay_rate = if valid {
        eig_min(&w2) / eig_max(&m22)
    } else {
        0.0
    };
    RotationalCertificate {
        c2,
        psi_bar,
        m21,
        m22,
        w2,
        valid,
        decay_rate,
    }
}

/// Time series of the Lyapunov values and error-norm vectors along a run.
#[derive(Debug, Clone, Default)]
pub struct LyapunovTrace {
    pub t: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v: Vec<f64>,
    /// [‖e_p‖, ‖e_v‖, ‖e_F‖] per step.
    pub z1: Vec<[f64; 3]>,
    /// [‖e_R‖, ‖e_ω‖, ‖e_M‖] per step.
    pub z2: Vec<[f64; 3]>,
}

/// Result of checking a trace against the certified decay.
#[derive(Debug, Clone)]
pub struct DecayReport {
    /// Certified rate β = min of the two subsystem rates, 1/s.
    pub beta: f64,
    pub certificates_valid: bool,
    /// First time at which V increased beyond the per-step tolerance.
    pub monotonicity_violation: Option<f64>,
    /// First time at which V exceeded 1.05·V(0)·e^{−βt}.
    pub envelope_violation: Option<f64>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.certificates_valid
            && self.monotonicity_violation.is_none()
            && self.envelope_violation.is_none()
    }
}

/// Checks that V is non-increasing (within a per-step tolerance of
/// `1e-6·max V` plus a discretization slack proportional to the local
/// |dV/dt|) and that `V(t) ≤ 1.05·V(0)·e^{−βt}` with the certified β.
pub fn verify_decay(
    trace: &LyapunovTrace,
    translational: &TranslationalCertificate,
    rotational: &RotationalCertificate,
) -> DecayReport {
    assert!(!trace.v.is_empty(), "trace must be nonempty");
    let certificates_valid = translational.valid && rotational.valid;
    let beta = translational.decay_rate.min(rotational.decay_rate);
    if !certificates_valid {
        return DecayReport {
            beta,
            certificates_valid,
            monotonicity_violation: None,
            envelope_violation: None,
        };
    }

    let v_max = trace.v.iter().cloned().fold(0.0f64, f64::max);
    let abs_tol = 1e-6 * v_max;

    let mut monotonicity_violation = None;
    for k in 1..trace.v.len() {
        let increase = trace.v[k] - trace.v[k - 1];
        // Slack: the previous step's |ΔV| stands in for dt·|dV/dt|.
        let slack = if k >= 2 {
            (trace.v[k - 1] - trace.v[k - 2]).abs()
        } else {
            0.0
        };
        if increase > abs_tol + slack {
            monotonicity_violation = Some(trace.t[k]);
            break;
        }
    }

    let v0 = trace.v[0];
    let t0 = trace.t[0];
    let mut envelope_violation = None;
    for k in 0..trace.v.len() {
        let envelope = 1.05 * v0 * (-beta * (trace.t[k] - t0)).exp() + 1e-12 * v_max;
        if trace.v[k] > envelope {
            envelope_violation = Some(trace.t[k]);
            break;
        }
    }

    DecayReport {
        beta,
        certificates_valid,
        monotonicity_violation,
        envelope_violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inertia() -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03))
    }

    fn random_vec3(rng: &mut impl Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn v1_reference_values() {
        let zero = Vec3::zeros();
        assert_eq!(v1(&zero, &zero, &zero, 3.0, 1.0, 0.1, 0.1), 0.0);
        let e_p = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(v1(&e_p, &zero, &zero, 3.0, 1.0, 0.1, 0.1), 1.5);
    }

    #[test]
    fn v2_reference_values() {
        let zero = Vec3::zeros();
        assert_eq!(
            v2(&zero, &zero, &zero, 0.0, 1.0, &inertia(), 0.1, 0.05),
            0.0
        );
        let e_w = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(
            v2(&zero, &e_w, &zero, 0.0, 1.0, &inertia(), 0.1, 0.05),
            0.015
        );
    }

    #[test]
    fn positive_definite_checks() {
        assert!(is_positive_definite(&Mat3::identity()));
        assert!(!is_positive_definite(&Mat3::from_diagonal(&Vec3::new(
            1.0, 1.0, -1.0
        ))));
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let a = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let gram = a.transpose() * a + 1e-6 * Mat3::identity();
            assert!(is_positive_definite(&gram));
        }
    }

    #[test]
    fn translational_certificate_reference_gains() {
        let cert = translational_certificate(3.0, 1.0, 0.1, 1.0, 0.1);
        assert!(cert.valid);
        assert!(cert.decay_rate > 0.0);
        // c1 ≥ kv makes the W1 (2,2) entry non-positive.
        let cert = translational_certificate(3.0, 1.0, 1.0, 1.0, 0.1);
        assert!(!cert.valid);
    }

    #[test]
    fn rotational_certificate_reference_gains() {
        let cert = rotational_certificate(1.0, 1.0, 0.05, &inertia(), 0.1, 1.9);
        assert!(cert.valid, "w2 min eig {}", eig_min(&cert.w2));
        // The M21 off-diagonal carries c2.
        assert_relative_eq!(cert.m21[(0, 1)], -0.5 * 0.05);
        assert_relative_eq!(cert.m21[(1, 0)], -0.5 * 0.05);
        // psi_bar → 2⁻ inflates M22 and collapses the certified rate.
        let tight = rotational_certificate(1.0, 1.0, 0.05, &inertia(), 0.1, 1.999);
        assert!(tight.valid);
        assert!(tight.decay_rate < cert.decay_rate);
        assert!(tight.m22[(0, 0)] > cert.m22[(0, 0)]);
    }

    #[test]
    fn gain_inequality_implies_w1_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut satisfied = 0;
        for _ in 0..1000 {
            let kp = rng.gen_range(0.01..10.0);
            let kv = rng.gen_range(0.01..10.0);
            let c1 = rng.gen_range(0.001..5.0);
            let mass = rng.gen_range(0.1..5.0);
            let margin = kv > c1 + 0.25;
            if !margin {
                continue;
            }
            let bound = (c1 * kv * kv + 2.0 * c1 * kv - c1 * c1) / (mass * (4.0 * (kv - c1) - 1.0));
            if kp > bound {
                satisfied += 1;
                let cert = translational_certificate(kp, kv, c1, mass, 0.1);
                assert!(
                    is_positive_definite(&cert.w1),
                    "kp={kp} kv={kv} c1={c1} m={mass}"
                );
                assert!(cert.valid);
            }
        }
        assert!(satisfied > 100, "sampling produced too few feasible cases");
    }

    #[test]
    fn sandwich_bounds_hold_for_random_errors() {
        let cert = translational_certificate(3.0, 1.0, 0.1, 1.0, 0.1);
        assert!(cert.valid);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..1000 {
            let e_p = random_vec3(&mut rng, 3.0);
            let e_v = random_vec3(&mut rng, 3.0);
            let e_f = random_vec3(&mut rng, 3.0);
            let value = v1(&e_p, &e_v, &e_f, 3.0, 1.0, 0.1, 0.1);
            let z = Vec3::new(e_p.norm(), e_v.norm(), e_f.norm());
            let lower = z.dot(&(cert.m11 * z));
            let upper = z.dot(&(cert.m12 * z));
            assert!(lower <= value + 1e-12 && value <= upper + 1e-12);
        }
    }

    #[test]
    fn rotational_sandwich_bounds_hold() {
        use crate::geometry::{attitude_error, exp_rotvec, psi};
        let cert = rotational_certificate(1.0, 1.0, 0.05, &inertia(), 0.1, 1.9);
        assert!(cert.valid);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let mut checked = 0;
        for _ in 0..2000 {
            let axis = random_vec3(&mut rng, 1.0).normalize();
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let r = exp_rotvec(&(axis * angle));
            let r_d = crate::geometry::Rotation::identity();
            let p = psi(&r, &r_d);
            if p > cert.psi_bar {
                continue;
            }
            checked += 1;
            let e_r = attitude_error(&r, &r_d);
            let e_w = random_vec3(&mut rng, 2.0);
            let e_m = random_vec3(&mut rng, 2.0);
            let value = v2(&e_r, &e_w, &e_m, p, 1.0, &inertia(), 0.1, 0.05);
            let z = Vec3::new(e_r.norm(), e_w.norm(), e_m.norm());
            let lower = z.dot(&(cert.m21 * z));
            let upper = z.dot(&(cert.m22 * z));
            assert!(lower <= value + 1e-12, "lower {lower} > v2 {value}");
            assert!(value <= upper + 1e-12, "v2 {value} > upper {upper}");
        }
        assert!(checked > 1000);
    }

    #[test]
    fn verify_decay_accepts_exponential() {
        let tc = translational_certificate(3.0, 1.0, 0.1, 1.0, 0.1);
        let rc = rotational_certificate(1.0, 1.0, 0.05, &inertia(), 0.1, 1.9);
        let beta = tc.decay_rate.min(rc.decay_rate);
        let mut trace = LyapunovTrace::default();
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            let v = 3.0 * (-2.0 * beta * t).exp();
            trace.t.push(t);
            trace.v.push(v);
            trace.v1.push(0.5 * v);
            trace.v2.push(0.5 * v);
            trace.z1.push([0.0; 3]);
            trace.z2.push([0.0; 3]);
        }
        let report = verify_decay(&trace, &tc, &rc);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn verify_decay_flags_violations() {
        let tc = translational_certificate(3.0, 1.0, 0.1, 1.0, 0.1);
        let rc = rotational_certificate(1.0, 1.0, 0.05, &inertia(), 0.1, 1.9);
        let mut trace = LyapunovTrace::default();
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            // Flat V: violates the exponential envelope, not monotonicity.
            trace.t.push(t);
            trace.v.push(3.0);
            trace.v1.push(1.5);
            trace.v2.push(1.5);
            trace.z1.push([0.0; 3]);
            trace.z2.push([0.0; 3]);
        }
        let report = verify_decay(&trace, &tc, &rc);
        assert!(report.monotonicity_violation.is_none());
        assert!(report.envelope_violation.is_some());

        // An abrupt bump trips the monotonicity check.
        let mut trace2 = LyapunovTrace::default();
        for k in 0..100 {
            let t = k as f64 * 0.01;
            let v = if k == 50 { 4.0 } else { 3.0 * (-t).exp() };
            trace2.t.push(t);
            trace2.v.push(v);
            trace2.v1.push(0.5 * v);
            trace2.v2.push(0.5 * v);
            trace2.z1.push([0.0; 3]);
            trace2.z2.push([0.0; 3]);
        }
        let report = verify_decay(&trace2, &tc, &rc);
        assert!(report.monotonicity_violation.is_some());
    }
}
