//! Command-line simulator for geometric tracking control of an
//! omnidirectional multirotor with first-order rotor dynamics.

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::{load_config, ConfigError, Overrides, RunConfig};
use omnirotor::controller::{find_feasible_constants, validate_gains, ControlMode};
use omnirotor::sim::{
    compare_controllers, force_sine, run_scenario, ChannelStats, Metrics, SimConfig, SimError,
    TraceLog,
};
use omnirotor::stability::{rotational_certificate, translational_certificate};
use omnirotor::Mat3;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "omnirotor",
    about = "Closed-loop simulator for an omnidirectional multirotor with rotor dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Proposed,
    Conventional,
}

impl From<ModeArg> for ControlMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Proposed => ControlMode::Proposed,
            ModeArg::Conventional => ControlMode::Conventional,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario from a config file; writes the trace
    /// CSV and a human-readable summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV path (default: output.path from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run even if no design constants satisfy the gain inequalities.
        #[arg(long)]
        force: bool,
    },
    /// Check the gain inequalities and print the certificate report.
    CheckGains {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rotor step-response curves for the thrust-lag and speed-lag models.
    StepResponse {
        #[arg(long, default_value_t = 0.07)]
        alpha_f: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha_m: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value = "step_response.csv")]
        out: PathBuf,
    },
    /// Single-axis force tracking on the clamped test bench.
    ForceTrack {
        #[arg(long, default_value_t = 16.0)]
        amplitude: f64,
        /// Angular frequency of the desired force, rad/s.
        #[arg(long, default_value_t = 4.0 * std::f64::consts::PI / 3.0)]
        frequency: f64,
        /// Rotor thrust time constant, s.
        #[arg(long, default_value_t = 0.07)]
        alpha: f64,
        #[arg(long, default_value_t = 5e-4)]
        dt: f64,
        #[arg(long, default_value_t = 8.0)]
        duration: f64,
        /// Restrict to one controller mode (default: both).
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long, default_value = "force_track.csv")]
        out: PathBuf,
    },
    /// Run the proposed and conventional controllers on identical
    /// configs and print side-by-side metrics.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional CSV prefix: writes `<prefix>.proposed.csv` and
        /// `<prefix>.conventional.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Sim(SimError::GainInfeasible) => EXIT_INFEASIBLE,
            Failure::Sim(SimError::Divergence { .. }) => EXIT_DIVERGENCE,
            Failure::Sim(SimError::InvalidConfig(_)) => EXIT_CONFIG,
            Failure::Sim(_) => 1,
            Failure::Output { .. } => 1,
        }
    }
}

fn write_file(
    path: &PathBuf,
    contents: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let mut buffer = Vec::new();
    contents(&mut buffer).map_err(|source| Failure::Output {
        path: path.clone(),
        source,
    })?;
    std::fs::write(path, buffer).map_err(|source| Failure::Output {
        path: path.clone(),
        source,
    })
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            config,
            out,
            mode,
            dt,
            duration,
            seed,
            force,
        } => {
            let overrides = Overrides {
                mode: mode.map(Into::into),
                dt,
                duration,
                seed,
                out,
                force,
            };
            let run = load_config(&config, &overrides)?;
            cmd_simulate(run)
        }
        Command::CheckGains { config } => {
            let run = load_config(&config, &Overrides::default())?;
            cmd_check_gains(run)
        }
        Command::StepResponse {
            alpha_f,
            alpha_m,
            dt,
            duration,
            out,
        } => cmd_step_response(alpha_f, alpha_m, dt, duration, out),
        Command::ForceTrack {
            amplitude,
            frequency,
            alpha,
            dt,
            duration,
            mode,
            out,
        } => cmd_force_track(amplitude, frequency, alpha, dt, duration, mode, out),
        Command::Compare {
            config,
            dt,
            duration,
            seed,
            out,
            force,
        } => {
            let overrides = Overrides {
                dt,
                duration,
                seed,
                force,
                ..Default::default()
            };
            let run = load_config(&config, &overrides)?;
            cmd_compare(run, out)
        }
    }
}

fn cmd_simulate(run: RunConfig) -> Result<(), Failure> {
    if run.sim.force_run {
        eprintln!("warning: --force set; the run proceeds even without validated design constants");
    }
    let (trace, metrics) = run_scenario(&run.sim, &run.params, &run.gains)?;
    write_file(&run.output, |buffer| trace.write_csv(buffer))?;

    let summary = render_summary(&run, &trace, &metrics);
    print!("{summary}");
    let summary_path = run.output.with_extension("summary.txt");
    write_file(&summary_path, |buffer| {
        use std::io::Write;
        buffer.write_all(summary.as_bytes())
    })?;
    println!(
        "trace: {} ({} rows); summary: {}",
        run.output.display(),
        trace.rows.len(),
        summary_path.display()
    );
    Ok(())
}

fn render_channel(name: &str, stats: &ChannelStats) -> String {
    format!(
        "  {name:<8} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>10}\n",
        stats.rms,
        stats.max,
        stats.rms_tail,
        stats.max_tail,
        stats
            .settling_time
            .map(|t| format!("{t:.3}"))
            .unwrap_or_else(|| "-".into())
    )
}

fn render_metrics(metrics: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "  channel  {:>12} {:>12} {:>12} {:>12} {:>10}",
        "rms", "max", "rms[tail]", "max[tail]", "settle[s]"
    );
    out += &render_channel("e_p", &metrics.e_p);
    out += &render_channel("e_v", &metrics.e_v);
    out += &render_channel("e_R", &metrics.e_r);
    out += &render_channel("e_omega", &metrics.e_omega);
    out += &render_channel("e_F", &metrics.e_f);
    out += &render_channel("e_M", &metrics.e_m);
    out
}

fn render_summary(run: &RunConfig, trace: &TraceLog, metrics: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# effective configuration");
    out += &run.effective;
    let _ = writeln!(out, "\n# tracking metrics (error norms)");
    out += &render_metrics(metrics);

    let _ = writeln!(out, "\n# certificates");
    let _ = writeln!(
        out,
        "  c1 = {:.6}, c2 = {:.6}, psi_bar = {:.4}",
        trace.c1, trace.c2, trace.psi_bar
    );
    let tc = translational_certificate(
        run.gains.kp,
        run.gains.kv,
        trace.c1,
        run.params.mass,
        run.params.alpha,
    );
    let rc = rotational_certificate(
        run.gains.kr,
        run.gains.komega,
        trace.c2,
        &run.params.inertia,
        run.params.alpha,
        trace.psi_bar,
    );
    let min_eig = |m: &Mat3| (0.5 * (m + m.transpose())).symmetric_eigenvalues().min();
    let _ = writeln!(
        out,
        "  translational: valid = {}, decay rate = {:.5} 1/s, min eig M11/M12/W1 = {:.3e}/{:.3e}/{:.3e}",
        tc.valid,
        tc.decay_rate,
        min_eig(&tc.m11),
        min_eig(&tc.m12),
        min_eig(&tc.w1)
    );
    let _ = writeln!(
        out,
        "  rotational:    valid = {}, decay rate = {:.5} 1/s, min eig M21/M22/W2 = {:.3e}/{:.3e}/{:.3e}",
        rc.valid,
        rc.decay_rate,
        min_eig(&rc.m21),
        min_eig(&rc.m22),
        min_eig(&rc.w2)
    );
    let decay = &metrics.decay;
    let _ = writeln!(
        out,
        "  decay check: beta = {:.5} 1/s, monotone violation = {}, envelope violation = {}",
        decay.beta,
        decay
            .monotonicity_violation
            .map(|t| format!("t = {t:.3} s"))
            .unwrap_or_else(|| "none".into()),
        decay
            .envelope_violation
            .map(|t| format!("t = {t:.3} s"))
            .unwrap_or_else(|| "none".into())
    );
    let _ = writeln!(
        out,
        "  thrust: max |f_i| = {:.3} N, limit {} N, exceeded = {}",
        trace.max_abs_thrust, run.params.f_max, trace.thrust_limit_exceeded
    );
    out
}

fn cmd_check_gains(run: RunConfig) -> Result<(), Failure> {
    let psi_bar = 1.9;
    let constants = match run.sim.constants {
        omnirotor::sim::GainConstants::Fixed(c1, c2) => Some((c1, c2)),
        omnirotor::sim::GainConstants::Auto => find_feasible_constants(
            &run.gains,
            run.params.mass,
            &run.params.inertia,
            run.params.alpha,
            psi_bar,
        ),
    };
    let Some((c1, c2)) = constants else {
        println!("infeasible: no design constants satisfy the gain inequalities");
        return Err(SimError::GainInfeasible.into());
    };
    let report = validate_gains(&run.gains, c1, c2, run.params.mass, &run.params.inertia)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    println!("design constants: c1 = {c1:.6}, c2 = {c2:.6}");
    println!(
        "translational inequality: satisfied = {} (kp = {} > bound {:.6}, kv margin ok = {})",
        report.translational.satisfied(),
        run.gains.kp,
        report.translational.bound,
        report.translational.margin_ok
    );
    println!(
        "rotational inequality:    satisfied = {} (kr = {} > bound {:.6}, komega margin ok = {})",
        report.rotational.satisfied(),
        run.gains.kr,
        report.rotational.bound,
        report.rotational.margin_ok
    );
    let tc = translational_certificate(
        run.gains.kp,
        run.gains.kv,
        c1,
        run.params.mass,
        run.params.alpha,
    );
    let rc = rotational_certificate(
        run.gains.kr,
        run.gains.komega,
        c2,
        &run.params.inertia,
        run.params.alpha,
        psi_bar,
    );
    let min_eig = |m: &Mat3| (0.5 * (m + m.transpose())).symmetric_eigenvalues().min();
    println!(
        "certificate min eigenvalues: M11 {:.4e}, M12 {:.4e}, W1 {:.4e}, M21 {:.4e}, M22 {:.4e}, W2 {:.4e}",
        min_eig(&tc.m11),
        min_eig(&tc.m12),
        min_eig(&tc.w1),
        min_eig(&rc.m21),
        min_eig(&rc.m22),
        min_eig(&rc.w2)
    );
    println!(
        "certified decay rates: translational {:.5} 1/s, rotational {:.5} 1/s (psi_bar = {psi_bar})",
        tc.decay_rate, rc.decay_rate
    );
    if !(report.all_satisfied() && tc.valid && rc.valid) {
        return Err(SimError::GainInfeasible.into());
    }
    Ok(())
}

fn cmd_step_response(
    alpha_f: f64,
    alpha_m: f64,
    dt: f64,
    duration: f64,
    out: PathBuf,
) -> Result<(), Failure> {
    if alpha_f <= 0.0 || alpha_m <= 0.0 || dt <= 0.0 || duration < dt {
        return Err(ConfigError::Invalid("step-response arguments must be positive".into()).into());
    }
    let log = omnirotor::sim::step_response_experiment(alpha_f, alpha_m, dt, duration);
    write_file(&out, |buffer| {
        use std::io::Write;
        writeln!(buffer, "t[s],thrust_lag[-],speed_lag[-]")?;
        for k in 0..log.t.len() {
            writeln!(
                buffer,
                "{:.16e},{:.16e},{:.16e}",
                log.t[k], log.td[k], log.dcmd[k]
            )?;
        }
        Ok(())
    })?;
    let at = |t: f64| ((t / dt).round() as usize).min(log.t.len() - 1);
    println!(
        "thrust-lag model at t = alpha_f = {alpha_f}: {:.5} (1 - 1/e = 0.63212)",
        log.td[at(alpha_f)]
    );
    println!(
        "speed-lag thrust at t = alpha_m = {alpha_m}: {:.5}",
        log.dcmd[at(alpha_m)]
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_force_track(
    amplitude: f64,
    frequency: f64,
    alpha: f64,
    dt: f64,
    duration: f64,
    mode: Option<ModeArg>,
    out: PathBuf,
) -> Result<(), Failure> {
    let base = config::build_config(
        &format!(
            "vehicle.alpha = {alpha}\nsim.plant = td\nsim.dt = {dt}\nsim.duration = {duration}\n\
             trajectory.variant = force_sine\ntrajectory.amplitude = {amplitude}\n\
             trajectory.frequency = {frequency}\n"
        ),
        &Overrides::default(),
    )?;
    let modes: Vec<ControlMode> = match mode {
        Some(m) => vec![m.into()],
        None => vec![ControlMode::Proposed, ControlMode::Conventional],
    };
    let mut traces: Vec<(ControlMode, TraceLog)> = Vec::new();
    for m in modes {
        let mut sim: SimConfig = base.sim.clone();
        sim.controller_mode = m;
        let (trace, _) = run_scenario(&sim, &base.params, &base.gains)?;
        traces.push((m, trace));
    }

    write_file(&out, |buffer| {
        use std::io::Write;
        let mut header = String::from("t[s],f_desired[N]");
        for (mode, _) in &traces {
            header += match mode {
                ControlMode::Proposed => ",f_proposed[N]",
                ControlMode::Conventional => ",f_conventional[N]",
            };
        }
        writeln!(buffer, "{header}")?;
        let rows = traces[0].1.rows.len();
        for k in 0..rows {
            let t = traces[0].1.rows[k].t;
            let (desired, _) = force_sine(t, amplitude, frequency);
            let mut line = format!("{t:.16e},{desired:.16e}");
            for (_, trace) in &traces {
                let _ = write!(line, ",{:.16e}", trace.rows[k].f.z);
            }
            writeln!(buffer, "{line}")?;
        }
        Ok(())
    })?;

    for (mode, trace) in &traces {
        let max_err = trace
            .rows
            .iter()
            .filter(|r| r.t >= 5.0 * alpha)
            .map(|r| (r.f.z - r.f_d.z).abs())
            .fold(0.0f64, f64::max);
        println!(
            "{}: max |F_z - F_z,d| after {:.2} s = {max_err:.4} N",
            match mode {
                ControlMode::Proposed => "proposed",
                ControlMode::Conventional => "conventional",
            },
            5.0 * alpha
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_compare(run: RunConfig, out: Option<PathBuf>) -> Result<(), Failure> {
    let report = compare_controllers(&run.sim, &run.params, &run.gains)?;
    println!("# proposed");
    print!("{}", render_metrics(&report.proposed));
    println!("# conventional");
    print!("{}", render_metrics(&report.conventional));
    println!("# rms ratio conventional/proposed over the final 20%");
    for (name, ratio) in report.rms_ratios_tail() {
        println!("  {name:<8} {ratio:>8.3}");
    }
    if let Some(prefix) = out {
        let proposed_path = prefix.with_extension("proposed.csv");
        write_file(&proposed_path, |b| report.proposed_trace.write_csv(b))?;
        let conventional_path = prefix.with_extension("conventional.csv");
        write_file(&conventional_path, |b| {
            report.conventional_trace.write_csv(b)
        })?;
        println!(
            "wrote {} and {}",
            proposed_path.display(),
            conventional_path.display()
        );
    }
    Ok(())
}
