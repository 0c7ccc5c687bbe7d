use std::path::Path;
use std::process::Command;

use lyhlab::cli::{describe, run, sweep, Axis, ExperimentConfig};
use lyhlab::Error;

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).unwrap()
}

const MINIMAL: &str = r#"{
  "model": { "kind": "flat_torus", "n": 1, "periods": [1.0], "resolution": 16 },
  "epsilon": [0.0],
  "u": { "kind": "constant", "value": 2.0 },
  "v": { "kind": "constant", "value": 0.5 },
  "schedule": { "t_start": 0.1, "t_end": 1.0, "steps": 9 },
  "suites": { "positivity": true, "conservation": true }
}"#;

const CP1: &str = r#"{
  "model": { "kind": "fubini_study_cp1", "resolution": 16 },
  "epsilon": [1.0],
  "seed": 3,
  "u": { "kind": "random_bandlimited", "offset": 1.0, "amplitude": 0.5, "max_mode": 2 },
  "v": { "kind": "random_bandlimited", "offset": 0.0, "amplitude": 0.3, "max_mode": 2 },
  "schedule": { "t_start": 0.01, "t_end": 0.4, "steps": 13 },
  "tolerances": { "positivity": 1e-6 },
  "suites": { "positivity": true, "conservation": true },
  "sweep": { "epsilon": [0.0, 0.5, 1.0] }
}"#;

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn minimal_run_reports_inverse_time() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&config(MINIMAL), dir.path()).unwrap();
    assert!(outcome.passed());
    let report = read(&dir.path().join("report.csv"));
    let ts = column(&report, "t");
    let qs = column(&report, "minQ");
    assert_eq!(ts.len(), 10);
    for (t, q) in ts.iter().zip(&qs) {
        let (t, q): (f64, f64) = (t.parse().unwrap(), q.parse().unwrap());
        assert!((q * t - 1.0).abs() < 1e-10, "t={t} q={q}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["passed"], true);
    assert!(manifest["library_version"].is_string());
    assert!(dir.path().join("residuals.csv").exists());
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn equal_amplitudes_fail_validation_before_running() {
    let mut c = config(MINIMAL);
    c.v = lyhlab::initial::Generator::Constant { value: 2.0 };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    match run(&c, &out).unwrap_err() {
        Error::Config { field, .. } => assert_eq!(field, "v"),
        e => panic!("unexpected {e}"),
    }
    assert!(!out.exists());
}

#[test]
fn describe_reports_model_constants() {
    let mut c = config(CP1);
    c.epsilon = vec![1.0];
    assert!(describe(&c).unwrap().contains("extinction at t=0.5"));
    assert!(describe(&config(MINIMAL)).unwrap().contains("flow static (Ricci-flat)"));
    let bad = MINIMAL.replace("[1.0]", "[-1.0]");
    let err = describe(&config(&bad)).unwrap_err().to_string();
    assert!(err.contains("periods"), "{err}");
}

#[test]
fn extinction_inside_the_schedule_is_rejected() {
    let bad = CP1.replace("\"t_end\": 0.4", "\"t_end\": 0.6");
    match describe(&config(&bad)).unwrap_err() {
        Error::Config { field, .. } => assert_eq!(field, "schedule.t_end"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = config(CP1);
    run(&c, a.path()).unwrap();
    run(&c, b.path()).unwrap();
    for f in ["report.csv", "residuals.csv", "summary.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn epsilon_sweep_writes_one_run_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = sweep(&config(CP1), Axis::Epsilon, dir.path()).unwrap();
    assert!(outcome.passed());
    assert_eq!(outcome.points.len(), 3);
    let summary = read(&dir.path().join("summary.csv"));
    assert!(summary.starts_with("epsilon,"));
    assert_eq!(column(&summary, "epsilon").len(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("epsilon_{i:03}")).join("report.csv").exists());
    }
}

#[test]
fn dt_sweep_fits_second_order() {
    let json = r#"{
      "model": { "kind": "flat_torus", "resolution": 32 },
      "seed": 2,
      "u": { "kind": "random_bandlimited", "offset": 1.0, "amplitude": 0.5 },
      "v": { "kind": "random_bandlimited", "offset": 0.0, "amplitude": 0.3 },
      "schedule": { "t_start": 0.01, "t_end": 0.3, "steps": 2 },
      "identity_times": [0.1],
      "sweep": { "dt": [4e-4, 2e-4, 1e-4] }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let outcome = sweep(&config(json), Axis::Dt, dir.path()).unwrap();
    assert!(outcome.passed());
    let table = read(&dir.path().join("convergence.csv"));
    let ids = column(&table, "identity_id");
    let orders = column(&table, "order");
    for (id, order) in ids.iter().zip(&orders) {
        if id == "q_inequality" {
            continue;
        }
        let p: f64 = order.parse().unwrap();
        assert!((1.8..=2.2).contains(&p), "{id}: {p}");
    }
}

#[test]
fn empty_sweep_axis_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    match sweep(&config(MINIMAL), Axis::Seed, dir.path()).unwrap_err() {
        Error::Config { field, .. } => assert_eq!(field, "sweep.seed"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn sharpness_preset_passes() {
    let json = r#"{
      "model": { "kind": "flat_torus", "resolution": 256 },
      "u": { "kind": "gaussian" },
      "v": { "kind": "scaled_u", "factor": 0.0 },
      "schedule": { "t_start": 0.02, "t_end": 0.05, "steps": 3 },
      "suites": { "positivity": false, "sharpness": true }
    }"#;
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&config(json), dir.path()).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.outcomes[0].max_sharpness);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lyhlab"))
}

#[test]
fn binary_exit_status_follows_the_suites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("minimal.json");
    std::fs::write(&cfg, MINIMAL).unwrap();
    let out = dir.path().join("ok");
    let status = binary().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));

    // constants are far from the sharp case, so the sharpness suite fails
    let out = dir.path().join("fail");
    let res = binary()
        .args(["run", "--suite", "sharpness", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8(res.stderr).unwrap();
    let listed = stderr.lines().filter(|l| l.contains("sharpness |minQ|")).count();
    assert_eq!(listed, 10, "{stderr}");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, MINIMAL.replace("[1.0]", "[0.0]")).unwrap();
    let res = binary().args(["describe", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8(res.stderr).unwrap().contains("periods"));
}

#[test]
fn binary_describe_prints_extinction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cp1.json");
    std::fs::write(&cfg, CP1).unwrap();
    let res = binary().args(["describe", "--config"]).arg(&cfg).output().unwrap();
    assert!(res.status.success());
    assert!(String::from_utf8(res.stdout).unwrap().contains("extinction at t=0.5"));
}
