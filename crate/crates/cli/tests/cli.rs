use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn epiphase(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiphase")).args(args).output().expect("binary runs")
}

fn fixture(tmp: &Path) -> PathBuf {
    let dir = tmp.join("fixture");
    let out = epiphase(&["synth", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert!(config.is_file());
    config
}

#[test]
fn validate_reports_ok_and_rejected_sensor() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = epiphase(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "ok");
    assert_eq!(report["rejected_sensors"]["traffic"], serde_json::json!(["T05"]));
    assert_eq!(report["datasets"].as_array().unwrap().len(), 5);
}

#[test]
fn duplicate_date_exits_3_naming_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let cases = config.parent().unwrap().join("cases.csv");
    let mut text = std::fs::read_to_string(&cases).unwrap();
    text.push_str("2020-01-21,3\n");
    std::fs::write(&cases, text).unwrap();
    let out = epiphase(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("cases.csv: line 191: duplicate date 2020-01-21 (first seen on line 3)"), "{stderr}");
}

#[test]
fn unreadable_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out = epiphase(&["cpd", "--config", config.to_str().unwrap(), "--set", "cases=absent.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn bad_configuration_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    for bad in ["colour=blue", "sma_window=seven", "smoothing_order=sideways"] {
        let out = epiphase(&["index", "--config", config.to_str().unwrap(), "--set", bad]);
        assert_eq!(out.status.code(), Some(3), "{bad}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: configuration:"), "{bad}");
    }
}

#[test]
fn analysis_failure_exits_4_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let thin = tmp.path().join("thin.csv");
    std::fs::write(&thin, "date,count\n2020-01-20,1\n").unwrap();
    let out_dir = tmp.path().join("bundle");
    let out = epiphase(&[
        "cpd",
        "--config",
        config.to_str().unwrap(),
        "--set",
        &format!("cases={}", thin.display()),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.exists());
}

#[test]
fn run_writes_bundle_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path());
    let out_dir = tmp.path().join("bundle");
    let out = epiphase(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "5",
        "--set",
        "bootstrap_reps=200",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "run");
    let echoed = std::fs::read_to_string(out_dir.join("config.txt")).unwrap();
    assert!(echoed.contains("seed = 5\n") && echoed.contains("bootstrap_reps = 200\n"));
    assert!(out_dir.join("fig3.svg").is_file());
}
