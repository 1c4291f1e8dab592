//! End-to-end checks of the command-line surface and its artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_geomech")
}

fn system(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../systems")
        .join(name)
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_writes_a_deterministic_monotone_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("kepler.json");
    let args = [
        "simulate",
        sys.to_str().unwrap(),
        "--E",
        "-0.5",
        "--span",
        "50",
        "--out",
        "traj.csv",
    ];
    let out = run(&args, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = std::fs::read(dir.path().join("traj.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "lambda,x,y,xdot,ydot,S,t,ell,H");
    let mut prev_t = f64::NEG_INFINITY;
    for line in lines {
        let t: f64 = line.split(',').nth(6).unwrap().parse().unwrap();
        assert!(t >= prev_t, "duration column not monotone");
        prev_t = t;
    }
    // byte-identical on a second run
    let out = run(&args, dir.path());
    assert!(out.status.success());
    let second = std::fs::read(dir.path().join("traj.csv")).unwrap();
    assert_eq!(first, second);
}

const POLAR_METRIC_OPERATOR: &str = "\
(-i*hbar)^2 * (1/(r^2)*(((-(r^2/(r^2)*(0.5*(-(2*r))))) + (-(r^2/(r^2)*(0.5*(-(2*r))))))*0.5)) * d[r]^1
(-i*hbar)^2 * (r^2/(r^2)) * d[r]^2
(-i*hbar)^2 * (1/(r^2)) * d[theta]^2
";

#[test]
fn quantize_emits_the_golden_operator_text() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("polar_free.json");
    let out = run(
        &[
            "quantize",
            sys.to_str().unwrap(),
            "--tensor",
            "metric",
            "--out",
            "op.txt",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("op.txt")).unwrap();
    assert_eq!(text, POLAR_METRIC_OPERATOR);
}

#[test]
fn dequantize_recovers_the_metric_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("polar_free.json");
    assert!(run(
        &[
            "quantize",
            sys.to_str().unwrap(),
            "--tensor",
            "metric",
            "--out",
            "op.txt"
        ],
        dir.path()
    )
    .status
    .success());
    let out = run(
        &[
            "dequantize",
            sys.to_str().unwrap(),
            "--op",
            "op.txt",
            "--out",
            "tensor.txt",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("tensor.txt")).unwrap();
    assert!(text.contains("deg 2 | r^2 |"), "{text}");
    assert!(text.contains("deg 2 | theta^2 | (1/(r^2))"), "{text}");
    assert!(
        !text.contains("deg 1"),
        "spurious lower-degree parts: {text}"
    );
}

#[test]
fn reduce_emits_a_loadable_kepler_system() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("hertz_kepler.json");
    let out = run(
        &["reduce", sys.to_str().unwrap(), "--out", "reduced.json"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let loaded =
        geomech::system::LoadedSystem::from_path(&dir.path().join("reduced.json")).unwrap();
    let u = loaded.sys.potential().unwrap();
    // U = g^00 P0^2 / 2 = -1/r
    for p in [[1.0_f64, 0.0], [0.6, 0.8], [2.0, 0.0]] {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        assert!((u.eval(&p).unwrap() + 1.0 / r).abs() < 1e-12);
    }
}

#[test]
fn phase_report_matches_the_oscillator_clocks() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("oscillator.json");
    let out = run(
        &[
            "phase-report",
            sys.to_str().unwrap(),
            "--E",
            "0.5",
            "--out",
            "phase.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("phase.json")).unwrap())
            .unwrap();
    let two_pi = 2.0 * std::f64::consts::PI;
    let t = value["t_classical"].as_f64().unwrap();
    let tau = value["tau_cycle"].as_f64().unwrap();
    let t0 = value["t0_cycle"].as_f64().unwrap();
    let phase = value["quantum_phase_mod_2pi"].as_f64().unwrap();
    assert!((t - two_pi).abs() < 1e-6);
    assert!((tau - two_pi).abs() < 1e-5);
    assert!((t0 + two_pi).abs() < 1e-5);
    assert!((phase - std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn phase_report_exposes_the_kepler_clock_relation() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("kepler.json");
    let out = run(
        &[
            "phase-report",
            sys.to_str().unwrap(),
            "--E",
            "-0.5",
            "--out",
            "phase.json",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("phase.json")).unwrap())
            .unwrap();
    let t = value["t_classical"].as_f64().unwrap();
    let tau = value["tau_cycle"].as_f64().unwrap();
    let t0 = value["t0_cycle"].as_f64().unwrap();
    assert!((t - 2.0 * std::f64::consts::PI).abs() < 1e-6);
    // wave time runs backwards twice as fast on bound orbits
    assert!((tau + 2.0 * t).abs() < 1e-3 * t, "tau = {tau}");
    // and the combined clock loses four periods per cycle
    assert!((t0 + 4.0 * t).abs() < 1e-3 * t, "t0 = {t0}");
}

#[test]
fn verify_runs_a_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--criterion", "4"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("PASS 04 oscillator-period-coincidence"),
        "{stdout}"
    );
}

#[test]
fn hj_emits_bundle_and_wavefront_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("kepler.json");
    let args = [
        "hj",
        sys.to_str().unwrap(),
        "--E",
        "-0.25",
        "--seeds",
        "8",
        "--span",
        "12",
        "--out",
        "bundle",
    ];
    let out = run(&args, dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let index: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("bundle/index.json")).unwrap(),
    )
    .unwrap();
    // the seed aimed straight at the center collides with the singularity;
    // its failure is reported per seed and the bundle survives
    assert_eq!(index["files"].as_array().unwrap().len(), 7);
    let failures = index["failures"].as_array().unwrap();
    assert_eq!(failures.len(), 1);
    let bad_param = failures[0]["seed_param"].as_f64().unwrap();
    assert!((bad_param - std::f64::consts::PI).abs() < 1e-9);
    assert!((index["energy"].as_f64().unwrap() + 0.25).abs() < 1e-12);
    for i in 0..7 {
        assert!(dir.path().join(format!("bundle/seed_{i:03}.csv")).exists());
    }
    let fronts: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("bundle/wavefronts.json")).unwrap(),
    )
    .unwrap();
    let fronts = fronts.as_array().unwrap();
    assert_eq!(fronts.len(), 3);
    for f in fronts {
        assert_eq!(f["points"].as_array().unwrap().len(), 7);
    }
    // determinism of the JSON artifact
    let first = std::fs::read(dir.path().join("bundle/wavefronts.json")).unwrap();
    assert!(run(&args, dir.path()).status.success());
    let second = std::fs::read(dir.path().join("bundle/wavefronts.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn schema_violations_fail_with_a_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"coordinates": ["x", "y"], "metric": [["1", "x"], ["0", "1"]]}"#,
    )
    .unwrap();
    let out = run(&["simulate", bad.to_str().unwrap()], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("metric[0][1]"), "{stderr}");
}

#[test]
fn missing_system_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "no_such_file.json"], dir.path());
    assert!(!out.status.success());
}
