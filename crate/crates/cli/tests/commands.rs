use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use adasync_cli::commands::{self, SweepParam};
use adasync_cli::{load_scenario, parse_scenario, scenario_to_toml};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adasync"))
}

const BUNDLED: [&str; 4] = ["platoon_aocm.toml", "platoon_nn.toml", "platoon_ie.toml", "matched_linear.toml"];

#[test]
fn bundled_scenarios_validate() {
    for name in BUNDLED {
        let report = commands::validate(&scenario(name));
        assert!(report.passed(), "{name}:\n{report}");
        let out = bin().arg("validate").arg(scenario(name)).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{name}");
    }
}

fn broken(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(scenario("platoon_aocm.toml")).unwrap();
    assert!(text.contains(from));
    let path = dir.join("broken.toml");
    fs::write(&path, text.replace(from, to)).unwrap();
    path
}

#[test]
fn cycle_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = broken(dir.path(), "{ from = 4, to = 6 },", "{ from = 4, to = 6 },\n    { from = 5, to = 2 },");
    let report = commands::validate(&path);
    let fail = report.failures().next().expect("must fail");
    assert_eq!(fail.name, "CycleDetected");
    let text = fs::read_to_string(&path).unwrap();
    let line = text.lines().position(|l| l.contains("{ from = 0, to = 1 }")).unwrap() + 1;
    assert!(fail.detail.contains(&format!(":{line}: [graph]")), "{}", fail.detail);

    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL CycleDetected"));
}

#[test]
fn indefinite_q_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = broken(dir.path(), "Q = [10.0, 1.0, 1.0]", "Q = [10.0, 1.0, -1.0]");
    let report = commands::validate(&path);
    assert_eq!(report.failures().next().unwrap().name, "NotPositiveDefinite");
    let out = bin().args(["run"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_file_is_io_error() {
    let out = bin().args(["validate", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["run", "/nonexistent/x.toml", "--out", "/tmp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = broken(dir.path(), "decimate = 10", "decimate = 10\ndivergence_guard = 1.5");
    let out = bin().arg("run").arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = commands::run(&scenario("matched_linear.toml"), dir.path(), Some(7)).unwrap();
    let csv = fs::read_to_string(&o.trajectory_csv).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,xm1,xm2,xm3,a1_x1,a1_x2,a1_x3,a1_u,a1_err"));
    assert_eq!(header.split(',').count(), 1 + 3 + 6 * 5);
    assert_eq!(lines.count(), 1000 / 7 + 1);

    let ff = fs::read_to_string(&o.feedforward_csv).unwrap();
    assert_eq!(ff.lines().next().unwrap(), "t,f0_1,f1_2,f2_3,f2_4,f3_5,f4_5,f4_6");

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&o.metrics_json).unwrap()).unwrap();
    assert_eq!(json["protocol"], "aocm");
    assert_eq!(json["agents"].as_array().unwrap().len(), 6);
    assert_eq!(json["edges"].as_array().unwrap().len(), 7);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = commands::run(&scenario("platoon_nn.toml"), &dir.path().join("a"), Some(100)).unwrap();
    let b = commands::run(&scenario("platoon_nn.toml"), &dir.path().join("b"), Some(100)).unwrap();
    for (x, y) in [(&a.trajectory_csv, &b.trajectory_csv), (&a.feedforward_csv, &b.feedforward_csv)] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn step_sweep_shows_fourth_order() {
    let sc = load_scenario(&scenario("matched_linear.toml")).unwrap();
    let rows = commands::sweep(&sc, SweepParam::H, &[0.1, 0.05, 0.025]);
    assert!(rows.iter().all(|r| r.status == "ok"));
    assert!(rows[0].observed_order.is_none());
    for r in &rows[1..] {
        let p = r.observed_order.unwrap();
        assert!((3.7..=4.3).contains(&p), "order {p}");
    }
    let mut csv = Vec::new();
    commands::write_sweep_csv(&mut csv, SweepParam::H, &rows).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("h,status,"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn sweep_keeps_input_order_and_reports_failures() {
    let sc = load_scenario(&scenario("matched_linear.toml")).unwrap();
    let rows = commands::sweep(&sc, SweepParam::Gamma, &[5.0, -1.0, 20.0]);
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    assert_eq!(values, [5.0, -1.0, 20.0]);
    assert_eq!(rows[0].status, "ok");
    assert_eq!(rows[1].status, "invalid");
    assert_eq!(rows[2].status, "ok");
}

#[test]
fn empty_sweep_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("s.csv");
    let out = bin()
        .arg("sweep")
        .arg(scenario("matched_linear.toml"))
        .args(["--param", "amplitude", "--values", "", "--out"])
        .arg(&out_file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&out_file).unwrap().lines().count(), 1);
}

#[test]
fn bundled_files_round_trip() {
    for name in BUNDLED {
        let sc = load_scenario(&scenario(name)).unwrap();
        let text = scenario_to_toml(&sc).unwrap();
        let back = parse_scenario(&text, name).unwrap();
        assert_eq!(back, sc, "{name}");
    }
}
