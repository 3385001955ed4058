//! Black-box tests of the `geocbf` binary: exit codes, output files,
//! determinism, and CSV shape.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geocbf"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("geocbf-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let base = "system = satellite\ndt = 0.001\nT = 0.5\n";
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("binary terminated by signal")
}

#[test]
fn run_writes_report_csv_svg() {
    let dir = tmp_dir("run");
    let cfg = write_config(&dir, "sat.cfg", "filter = qp\n");
    let out_dir = dir.join("out");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--csv", "--svg", "--output-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    for key in [
        "min_h",
        "min_h0",
        "constraint_active_fraction",
        "max_torque_norm",
        "divergence_flag",
        "wall_time",
    ] {
        assert!(report.get(key).is_some(), "report missing {key}");
    }
    assert_eq!(report["divergence_flag"], serde_json::Value::Bool(false));
    let min_h = report["min_h"].as_f64().unwrap();
    let min_h0 = report["min_h0"].as_f64().unwrap();
    assert!(min_h <= min_h0 + 1e-12);

    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,qw00,qw01,qw02,qw10,qw11,qw12,qw20,qw21,qw22,v0,v1,v2,tau0,tau1,h,h0,hdot_margin"
    );
    assert_eq!(lines.count(), 501);
    for name in ["h_plot.svg", "sphere_trace.svg"] {
        let svg = std::fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(svg.starts_with("<svg"), "{name} is not an SVG");
    }
}

#[test]
fn run_is_deterministic() {
    let dir = tmp_dir("det");
    let cfg = write_config(&dir, "sat.cfg", "filter = hs\n");
    let mut csvs = Vec::new();
    for tag in ["a", "b"] {
        let out_dir = dir.join(tag);
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--csv", "--output-dir"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        csvs.push(std::fs::read(out_dir.join("trajectory.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "identical configs must produce identical bytes");
}

#[test]
fn config_errors_exit_2() {
    let dir = tmp_dir("cfg");
    let bad = dir.join("bad.cfg");
    std::fs::write(&bad, "system = satellite\nepsilon = -3\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);

    let out = bin()
        .args(["run", "--config"])
        .arg(dir.join("missing.cfg"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);

    let cfg = write_config(&dir, "ok.cfg", "");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--filter", "bogus"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn divergence_exits_3() {
    let dir = tmp_dir("div");
    // gain large enough to overflow f64 in the quadratic velocity terms
    let cfg = write_config(&dir, "blowup.cfg", "filter = none\ngains.kp = 1e200\n");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--output-dir"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn check_quick_passes_and_filters_modules() {
    let out = bin().args(["check", "--quick"]).output().unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));

    let out = bin()
        .args(["check", "--quick", "--module", "lambda"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lambda-properties"));
    assert!(!stdout.contains("integrator-order"));

    let out = bin()
        .args(["check", "--quick", "--module", "no-such-check"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_writes_summary_rows() {
    let dir = tmp_dir("sweep");
    let cfg = write_config(&dir, "sat.cfg", "filter = qp\n");
    let out_dir = dir.join("out");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--param", "epsilon", "--values", "0.1,0.5,2.0", "--output-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep_epsilon.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "value,min_h0,max_torque_norm");
    assert_eq!(lines.count(), 3);

    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--param", "mass", "--values", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn output_dir_env_fallback() {
    let dir = tmp_dir("env");
    let cfg = write_config(&dir, "sat.cfg", "filter = qp\n");
    let out_dir = dir.join("from-env");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("GEOCBF_OUTPUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(out_dir.join("report.json").exists());
}
