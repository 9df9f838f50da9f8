//! Run configuration: a flat key-value text format with dotted sections.
//!
//! ```text
//! vehicle.mass = 1.0
//! gains.kp = 3.0
//! trajectory.variant = circle_tumble
//! rotor.0.axis = 0.8165, 0, 0.5774
//! ```
//!
//! Lines are `key = value`; `#` starts a comment. Unknown or duplicate
//! keys are errors. Defaults fill everything that is omitted, and the
//! effective configuration (defaults applied) can be echoed back so a
//! run is reproducible from its own summary.

use omnirotor::allocation::{default_hex_config, Directionality, Rotor, RotorGeometry};
use omnirotor::controller::{ControlMode, Gains};
use omnirotor::plant::{RotorModel, VehicleParams};
use omnirotor::sim::{GainConstants, InitialCondition, RotorInit, SimConfig, TrajectorySpec};
use omnirotor::{Mat3, Vec3};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("config line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("config key `{key}`: cannot parse `{value}` as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("rotor blocks must be numbered 0..n without gaps; missing `rotor.{index}.{field}`")]
    IncompleteRotor { index: usize, field: &'static str },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Parsed raw key-value pairs with consumption tracking.
struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (number, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line: number + 1,
                    text: line.to_string(),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::Duplicate {
                    line: number + 1,
                    key,
                });
            }
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some((key, _)) = self.entries.into_iter().next() {
            return Err(ConfigError::UnknownKey { key });
        }
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a number",
    })
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "an integer",
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "true or false",
        }),
    }
}

fn parse_numbers(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|part| parse_f64(key, part.trim()))
        .collect()
}

fn parse_vec3(key: &str, value: &str) -> Result<Vec3, ConfigError> {
    let numbers = parse_numbers(key, value)?;
    if numbers.len() != 3 {
        return Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected: "three comma-separated numbers",
        });
    }
    Ok(Vec3::new(numbers[0], numbers[1], numbers[2]))
}

/// Fully resolved run configuration (defaults applied).
#[derive(Debug)]
pub struct RunConfig {
    pub params: VehicleParams,
    pub gains: Gains,
    pub sim: SimConfig,
    pub output: PathBuf,
    /// Effective `key = value` listing for the run summary.
    pub effective: String,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub mode: Option<ControlMode>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    build_config(&text, overrides)
}

pub fn build_config(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;
    let mut effective = String::new();

    macro_rules! take_or {
        ($key:expr, $default:expr, $parse:expr) => {{
            match raw.take($key) {
                Some(value) => $parse($key, &value)?,
                None => $default,
            }
        }};
    }

    // Vehicle.
    let mass = take_or!("vehicle.mass", 1.0, parse_f64);
    let gravity = take_or!("vehicle.gravity", 9.81, parse_f64);
    let inertia = match raw.take("vehicle.inertia") {
        Some(value) => {
            let numbers = parse_numbers("vehicle.inertia", &value)?;
            match numbers.len() {
                3 => Mat3::from_diagonal(&Vec3::new(numbers[0], numbers[1], numbers[2])),
                9 => Mat3::from_row_slice(&numbers),
                _ => {
                    return Err(ConfigError::BadValue {
                        key: "vehicle.inertia".into(),
                        value,
                        expected: "3 (diagonal) or 9 (row-major) numbers",
                    })
                }
            }
        }
        None => Mat3::from_diagonal(&Vec3::new(0.03, 0.03, 0.03)),
    };
    let alpha = take_or!("vehicle.alpha", 0.1, parse_f64);
    let mu = take_or!("vehicle.mu", 2.5e-6, parse_f64);
    let f_max = take_or!("vehicle.f_max", 10.0, parse_f64);

    // Geometry: the default hex layout or explicit rotor blocks.
    let geometry_default = take_or!("geometry.default", true, parse_bool);
    let arm_length = take_or!("geometry.arm_length", 0.15, parse_f64);
    let torque_per_thrust = take_or!("geometry.torque_per_thrust", 0.15, parse_f64);
    let directionality = match raw
        .take("geometry.directionality")
        .as_deref()
        .unwrap_or("bidirectional")
    {
        "bidirectional" => Directionality::Bidirectional,
        "unidirectional" => Directionality::Unidirectional,
        other => {
            return Err(ConfigError::BadValue {
                key: "geometry.directionality".into(),
                value: other.into(),
                expected: "bidirectional or unidirectional",
            })
        }
    };
    let geometry = if geometry_default {
        default_hex_config(arm_length, torque_per_thrust)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?
    } else {
        let mut rotors = Vec::new();
        for index in 0.. {
            let position_key = format!("rotor.{index}.position");
            let Some(position) = raw.take(&position_key) else {
                break;
            };
            let position = parse_vec3(&position_key, &position)?;
            let axis_key = format!("rotor.{index}.axis");
            let axis = raw
                .take(&axis_key)
                .ok_or(ConfigError::IncompleteRotor {
                    index,
                    field: "axis",
                })
                .and_then(|v| parse_vec3(&axis_key, &v))?;
            let spin_key = format!("rotor.{index}.spin");
            let spin = raw
                .take(&spin_key)
                .ok_or(ConfigError::IncompleteRotor {
                    index,
                    field: "spin",
                })
                .and_then(|v| parse_f64(&spin_key, &v))?;
            rotors.push(Rotor {
                position,
                axis,
                spin,
            });
        }
        RotorGeometry::new(rotors, directionality, torque_per_thrust)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?
    };

    // Gains and optional design constants.
    let kp = take_or!("gains.kp", 3.0, parse_f64);
    let kv = take_or!("gains.kv", 1.0, parse_f64);
    let kr = take_or!("gains.kr", 1.0, parse_f64);
    let komega = take_or!("gains.komega", 1.0, parse_f64);
    if kp <= 0.0 || kv <= 0.0 || kr <= 0.0 || komega <= 0.0 {
        return Err(ConfigError::Invalid("gains must be positive".into()));
    }
    let c1 = raw
        .take("constants.c1")
        .map(|v| parse_f64("constants.c1", &v))
        .transpose()?;
    let c2 = raw
        .take("constants.c2")
        .map(|v| parse_f64("constants.c2", &v))
        .transpose()?;
    let constants = match (c1, c2) {
        (Some(c1), Some(c2)) => GainConstants::Fixed(c1, c2),
        (None, None) => GainConstants::Auto,
        _ => {
            return Err(ConfigError::Invalid(
                "constants.c1 and constants.c2 must be given together".into(),
            ))
        }
    };

    // Simulation.
    let dt = overrides.dt.unwrap_or(take_or!("sim.dt", 1e-3, parse_f64));
    let duration = overrides
        .duration
        .unwrap_or(take_or!("sim.duration", 10.0, parse_f64));
    let seed = overrides
        .seed
        .unwrap_or(take_or!("sim.seed", 0, parse_int::<u64>));
    let control_decimation = take_or!("sim.decimation", 1usize, parse_int::<usize>);
    let log_decimation = take_or!("sim.log_decimation", 1usize, parse_int::<usize>);
    let plant_model = match raw.take("sim.plant").as_deref().unwrap_or("td") {
        "td" => RotorModel::ThrustDynamics,
        "dcmd" => RotorModel::DcMotorDynamics,
        other => {
            return Err(ConfigError::BadValue {
                key: "sim.plant".into(),
                value: other.into(),
                expected: "td or dcmd",
            })
        }
    };
    let controller_mode = match overrides.mode {
        Some(mode) => mode,
        None => match raw.take("sim.mode").as_deref().unwrap_or("proposed") {
            "proposed" => ControlMode::Proposed,
            "conventional" => ControlMode::Conventional,
            other => {
                return Err(ConfigError::BadValue {
                    key: "sim.mode".into(),
                    value: other.into(),
                    expected: "proposed or conventional",
                })
            }
        },
    };
    let rotor_init = match raw.take("sim.rotor_init").as_deref().unwrap_or("warm") {
        "warm" => RotorInit::Warm,
        "cold" => RotorInit::Cold,
        other => {
            return Err(ConfigError::BadValue {
                key: "sim.rotor_init".into(),
                value: other.into(),
                expected: "warm or cold",
            })
        }
    };

    // Trajectory.
    let variant = raw
        .take("trajectory.variant")
        .unwrap_or_else(|| "circle_tumble".into());
    let radius = take_or!("trajectory.radius", 1.0, parse_f64);
    let height = take_or!("trajectory.height", 1.0, parse_f64);
    // The circling rate is a free parameter of the reference; the
    // tumbling rate matches the attitude spin.
    let position_rate = take_or!("trajectory.position_rate", 1.0, parse_f64);
    let attitude_rate = take_or!("trajectory.attitude_rate", 1.0, parse_f64);
    let amplitude = take_or!("trajectory.amplitude", 16.0, parse_f64);
    let frequency = take_or!(
        "trajectory.frequency",
        4.0 * std::f64::consts::PI / 3.0,
        parse_f64
    );
    let hold_position = take_or!("trajectory.position", Vec3::new(0.0, 0.0, 1.0), parse_vec3);
    let step_angle = take_or!("trajectory.angle", 1.0, parse_f64);
    let trajectory = match variant.as_str() {
        "circle_tumble" => TrajectorySpec::CircleTumble {
            radius,
            height,
            position_rate,
            attitude_rate,
        },
        "force_sine" => TrajectorySpec::ForceSine {
            amplitude,
            frequency,
        },
        "hover" => TrajectorySpec::Hover {
            position: hold_position,
        },
        "step_attitude" => TrajectorySpec::StepAttitude { angle: step_angle },
        other => {
            return Err(ConfigError::BadValue {
                key: "trajectory.variant".into(),
                value: other.into(),
                expected: "circle_tumble, force_sine, hover, or step_attitude",
            })
        }
    };

    let output = overrides.out.clone().unwrap_or_else(|| {
        raw.take("output.path")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("trace.csv"))
    });
    if overrides.out.is_some() {
        raw.take("output.path");
    }

    raw.finish()?;

    let params = VehicleParams::new(mass, gravity, inertia, alpha, mu, f_max, geometry.clone())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let gains = Gains::new(kp, kv, kr, komega);
    let mut sim = SimConfig::new(trajectory);
    sim.dt = dt;
    sim.duration = duration;
    sim.plant_model = plant_model;
    sim.controller_mode = controller_mode;
    sim.seed = seed;
    sim.control_decimation = control_decimation;
    sim.log_decimation = log_decimation;
    sim.rotor_init = rotor_init;
    sim.initial = InitialCondition::Origin;
    sim.constants = constants;
    sim.force_run = overrides.force;

    // Echo the effective configuration so a run is reproducible from
    // its own summary.
    let w = &mut effective;
    let _ = writeln!(w, "vehicle.mass = {mass}");
    let _ = writeln!(w, "vehicle.gravity = {gravity}");
    let _ = writeln!(
        w,
        "vehicle.inertia = {}, {}, {}, {}, {}, {}, {}, {}, {}",
        inertia[(0, 0)],
        inertia[(0, 1)],
        inertia[(0, 2)],
        inertia[(1, 0)],
        inertia[(1, 1)],
        inertia[(1, 2)],
        inertia[(2, 0)],
        inertia[(2, 1)],
        inertia[(2, 2)]
    );
    let _ = writeln!(w, "vehicle.alpha = {alpha}");
    let _ = writeln!(w, "vehicle.mu = {mu}");
    let _ = writeln!(w, "vehicle.f_max = {f_max}");
    if geometry_default {
        let _ = writeln!(w, "geometry.default = true");
        let _ = writeln!(w, "geometry.arm_length = {arm_length}");
    } else {
        let _ = writeln!(w, "geometry.default = false");
        let _ = writeln!(
            w,
            "geometry.directionality = {}",
            match directionality {
                Directionality::Bidirectional => "bidirectional",
                Directionality::Unidirectional => "unidirectional",
            }
        );
        for (i, rotor) in geometry.rotors().iter().enumerate() {
            let _ = writeln!(
                w,
                "rotor.{i}.position = {}, {}, {}",
                rotor.position.x, rotor.position.y, rotor.position.z
            );
            let _ = writeln!(
                w,
                "rotor.{i}.axis = {}, {}, {}",
                rotor.axis.x, rotor.axis.y, rotor.axis.z
            );
            let _ = writeln!(w, "rotor.{i}.spin = {}", rotor.spin);
        }
    }
    let _ = writeln!(w, "geometry.torque_per_thrust = {torque_per_thrust}");
    let _ = writeln!(w, "gains.kp = {kp}");
    let _ = writeln!(w, "gains.kv = {kv}");
    let _ = writeln!(w, "gains.kr = {kr}");
    let _ = writeln!(w, "gains.komega = {komega}");
    if let GainConstants::Fixed(c1, c2) = sim.constants {
        let _ = writeln!(w, "constants.c1 = {c1}");
        let _ = writeln!(w, "constants.c2 = {c2}");
    }
    let _ = writeln!(w, "sim.dt = {dt}");
    let _ = writeln!(w, "sim.duration = {duration}");
    let _ = writeln!(w, "sim.seed = {seed}");
    let _ = writeln!(w, "sim.decimation = {control_decimation}");
    let _ = writeln!(w, "sim.log_decimation = {log_decimation}");
    let _ = writeln!(
        w,
        "sim.plant = {}",
        match plant_model {
            RotorModel::ThrustDynamics => "td",
            RotorModel::DcMotorDynamics => "dcmd",
        }
    );
    let _ = writeln!(
        w,
        "sim.mode = {}",
        match controller_mode {
            ControlMode::Proposed => "proposed",
            ControlMode::Conventional => "conventional",
        }
    );
    let _ = writeln!(
        w,
        "sim.rotor_init = {}",
        match sim.rotor_init {
            RotorInit::Warm => "warm",
            RotorInit::Cold => "cold",
            RotorInit::WarmWithWrenchOffset(..) => "warm",
        }
    );
    let _ = writeln!(w, "trajectory.variant = {variant}");
    match &sim.trajectory {
        TrajectorySpec::CircleTumble { .. } => {
            let _ = writeln!(w, "trajectory.radius = {radius}");
            let _ = writeln!(w, "trajectory.height = {height}");
            let _ = writeln!(w, "trajectory.position_rate = {position_rate}");
            let _ = writeln!(w, "trajectory.attitude_rate = {attitude_rate}");
        }
        TrajectorySpec::ForceSine { .. } => {
            let _ = writeln!(w, "trajectory.amplitude = {amplitude}");
            let _ = writeln!(w, "trajectory.frequency = {frequency}");
        }
        TrajectorySpec::Hover { .. } => {
            let _ = writeln!(
                w,
                "trajectory.position = {}, {}, {}",
                hold_position.x, hold_position.y, hold_position.z
            );
        }
        TrajectorySpec::StepAttitude { .. } => {
            let _ = writeln!(w, "trajectory.angle = {step_angle}");
        }
    }
    let _ = writeln!(w, "output.path = {}", output.display());

    Ok(RunConfig {
        params,
        gains,
        sim,
        output,
        effective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_runnable_config() {
        let config = build_config("", &Overrides::default()).unwrap();
        assert_eq!(config.params.rotor_count(), 6);
        assert_eq!(config.sim.dt, 1e-3);
        assert!(config.effective.contains("gains.kp = 3"));
    }

    #[test]
    fn comments_and_overrides() {
        let text = "sim.dt = 0.002  # coarse\nvehicle.mass = 2.0\n";
        let overrides = Overrides {
            dt: Some(0.0005),
            ..Default::default()
        };
        let config = build_config(text, &overrides).unwrap();
        assert_eq!(config.sim.dt, 0.0005);
        assert_eq!(config.params.mass, 2.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = build_config("vehicle.masss = 1.0", &Overrides::default()).unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
    }

    #[test]
    fn duplicate_key_rejected() {
        let err =
            build_config("sim.dt = 0.001\nsim.dt = 0.002", &Overrides::default()).unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { .. }));
    }

    #[test]
    fn explicit_rotor_blocks() {
        let mut text = String::from("geometry.default = false\n");
        for (i, (azimuth, spin)) in (0..6)
            .map(|i| {
                (
                    std::f64::consts::FRAC_PI_3 * i as f64,
                    if i % 2 == 0 { 1.0 } else { -1.0 },
                )
            })
            .enumerate()
        {
            let tilt = (2.0f64).sqrt().atan();
            text += &format!(
                "rotor.{i}.position = {}, {}, 0\n",
                0.15 * azimuth.cos(),
                0.15 * azimuth.sin()
            );
            text += &format!(
                "rotor.{i}.axis = {}, {}, {}\n",
                tilt.sin() * azimuth.cos(),
                tilt.sin() * azimuth.sin(),
                tilt.cos()
            );
            text += &format!("rotor.{i}.spin = {spin}\n");
        }
        let config = build_config(&text, &Overrides::default()).unwrap();
        assert_eq!(config.params.rotor_count(), 6);
    }

    #[test]
    fn effective_echo_round_trips() {
        let config = build_config("sim.duration = 2.5", &Overrides::default()).unwrap();
        let echoed = build_config(&config.effective, &Overrides::default()).unwrap();
        assert_eq!(echoed.sim.duration, 2.5);
        assert_eq!(echoed.effective, config.effective);
    }
}
