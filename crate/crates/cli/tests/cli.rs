//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omnirotor"))
}

fn bundled_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn simulate_bundled_circle_tumble() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let output = run(&[
        "simulate",
        "--config",
        bundled_config("circle_tumble.cfg").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--duration",
        "2.0",
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 65); // 59 fixed + 6 rotors
    assert_eq!(lines.count(), 2001);
    let summary = std::fs::read_to_string(out.with_extension("summary.txt")).unwrap();
    assert!(summary.contains("# effective configuration"));
    assert!(summary.contains("decay check"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "simulate",
            "--config",
            bundled_config("circle_tumble.cfg").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--duration",
            "1.0",
            "--seed",
            "42",
        ]);
        assert!(output.status.success());
    }
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
}

#[test]
fn missing_config_is_a_config_error() {
    let output = run(&["simulate", "--config", "/nonexistent/nope.cfg"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "vehicle.unknown_knob = 1\n").unwrap();
    let output = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn infeasible_gains_exit_three_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weak.cfg");
    // kv at or below 1/4 leaves no room for any positive constant.
    std::fs::write(&path, "gains.kv = 0.1\nsim.duration = 0.1\n").unwrap();
    let output = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));

    let out = dir.path().join("forced.csv");
    let output = run(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--force",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert!(out.exists());
}

#[test]
fn divergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unstable.cfg");
    // A very slow rotor destabilizes the conventional loop.
    std::fs::write(
        &path,
        "vehicle.alpha = 5.0\nsim.mode = conventional\nsim.duration = 120\nsim.log_decimation = 100\n",
    )
    .unwrap();
    let out = dir.path().join("unstable.csv");
    let output = run(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn check_gains_reports_constants() {
    let output = run(&[
        "check-gains",
        "--config",
        bundled_config("circle_tumble.cfg").to_str().unwrap(),
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("design constants"));
    assert!(text.contains("certified decay rates"));
}

#[test]
fn check_gains_infeasible_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weak.cfg");
    std::fs::write(&path, "gains.kv = 0.1\n").unwrap();
    let output = run(&["check-gains", "--config", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn step_response_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("step.csv");
    let output = run(&["step-response", "--out", out.to_str().unwrap()]);
    assert!(output.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t[s],thrust_lag[-],speed_lag[-]");
    assert_eq!(lines.count(), 1001);
}

#[test]
fn force_track_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("force.csv");
    let output = run(&[
        "force-track",
        "--duration",
        "2.0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t[s],f_desired[N],f_proposed[N],f_conventional[N]"));
}

#[test]
fn compare_prints_ratio_table() {
    let output = run(&[
        "compare",
        "--config",
        bundled_config("circle_tumble.cfg").to_str().unwrap(),
        "--duration",
        "3.0",
    ]);
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = stdout(&output);
    assert!(text.contains("# proposed"));
    assert!(text.contains("# conventional"));
    assert!(text.contains("rms ratio conventional/proposed"));
}
