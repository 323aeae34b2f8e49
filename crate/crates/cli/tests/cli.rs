use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FAST: [&str; 8] = [
    "--override",
    "grid.n=257",
    "--override",
    "time.t_final=0.1",
    "--override",
    "time.dt=4e-3",
    "--override",
    "time.stride=5",
];

fn freecongest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freecongest")).args(args).output().expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn steady_wave_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sw");
    let mut args = vec!["--preset", "steady_wave", "--out-dir", out.to_str().unwrap()];
    args.extend(FAST);
    let o = freecongest(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert_eq!(s["converged"], true);
    assert!(s["picard_iterations"].as_u64().unwrap() >= 1);
    assert!(s["drift"]["v"].as_f64().unwrap() < 1e-3);
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,xtilde,xtilde_dot,p_s,l2_v_err,h1_v_err,l2_u_err,beta_h1_running"));
    assert_eq!(lines.count(), 26);
    let snaps: Vec<_> = fs::read_dir(out.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 6);
    let snap = fs::read_to_string(out.join("snapshots/trajectory_000000.txt")).unwrap();
    assert_eq!(snap.lines().nth(1), Some("x v u w p"));
    for line in fs::read_to_string(out.join("diagnostics.jsonl")).unwrap().lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        for key in ["t", "check", "lhs", "rhs", "gap", "pass"] {
            assert!(r.get(key).is_some(), "{key} missing in {line}");
        }
    }
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("grid.n = 257"));
}

#[test]
fn stability_sweep_writes_one_trajectory_per_amplitude() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let mut args = vec!["--preset", "stability_sweep", "--out-dir", out.to_str().unwrap()];
    args.extend(FAST);
    let o = freecongest(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for i in 0..3 {
        assert!(out.join(format!("trajectory_amp{i}.csv")).exists());
    }
    let s = summary(&out);
    let runs = s["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let amps: Vec<f64> = runs.iter().map(|r| r["amplitude"].as_f64().unwrap()).collect();
    assert_eq!(amps, [1e-4, 1e-3, 1e-2]);
    assert!(runs.iter().all(|r| r["maximum_principle"]["holds"] == true));
}

#[test]
fn missing_v_plus_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "preset = steady_wave\nparams.mu = 1\nparams.u_minus = 1\nparams.u_plus = 0\n").unwrap();
    let o = freecongest(&["--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["status"], "error");
    assert_eq!(err["field"], "params.v_plus");
}

#[test]
fn config_errors_carry_line_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "preset = steady_wave\nparams.mu = 1\nparams.v_plus = 2\nparams.u_minus = 1\nparams.u_plus = 0\ngrid.n = lots\n")
        .unwrap();
    let o = freecongest(&["--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["field"], "grid.n");
    fs::write(&cfg, "preset = steady_wave\nparams.mu: 1\n").unwrap();
    let o = freecongest(&["--config", cfg.to_str().unwrap()]);
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["line"], 2);
}

#[test]
fn unknown_preset_is_rejected() {
    let o = freecongest(&["--preset", "sawtooth"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sawtooth"));
}

#[test]
fn lists_seven_presets() {
    let o = freecongest(&["--list-presets"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 7);
}

#[test]
fn solver_failure_writes_failure_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fail");
    let mut args = vec!["--preset", "steady_wave", "--out-dir", out.to_str().unwrap()];
    args.extend(FAST);
    args.extend(["--override", "solver.max_iter=0"]);
    let o = freecongest(&args);
    assert!(!o.status.success());
    let s = summary(&out);
    assert_eq!(s["status"], "error");
    assert_eq!(s["passed"], false);
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let mut args = vec!["--preset", "trace_suite", "--out-dir", out.to_str().unwrap()];
        args.extend(FAST);
        assert!(freecongest(&args).status.success());
        fs::read(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
