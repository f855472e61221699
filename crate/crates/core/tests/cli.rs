use std::path::Path;
use std::process::{Command, Output};

use fogport::harness::Calibration;

fn fogport(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogport")).args(args).current_dir(dir).output().unwrap()
}

fn short_run<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec!["run", "--preset", "fog1", "--rates", "5,10", "--duration", "2", "--out", out];
    args.extend_from_slice(extra);
    args
}

#[test]
fn unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = fogport(&short_run("o", &["--preset", "fog9"]), dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fog9"));
}

#[test]
fn decreasing_rates_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = fogport(&["run", "--preset", "fog1", "--rates", "10,5", "--duration", "2", "--out", "o"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("o/summary.json").exists());
}

#[test]
fn bad_cluster_radius_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = fogport(&short_run("o", &["--clusters-eps", "-1"]), dir.path());
    assert!(!out.status.success());
}

#[test]
fn profile_prints_the_bundled_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let out = fogport(&["profile"], dir.path());
    assert!(out.status.success());
    let parsed: Calibration = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed, Calibration::frozen());
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = fogport(&short_run("o", &["--export-heatmap", "--clusters-eps", "3"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["requests.csv", "summary.json", "heatmap.csv", "heatmap.pgm", "clusters.jsonl"] {
        assert!(dir.path().join("o").join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("o/requests.csv")).unwrap();
    assert!(csv.starts_with("id,config,rate,created_at,target,response_ms,violated,predicted_violation,outcome"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rates"], serde_json::json!([5.0, 10.0]));
}

#[test]
fn calibration_file_overrides_bundled_profile() {
    let dir = tempfile::tempdir().unwrap();
    let mut cal = Calibration::frozen();
    cal.sla_ms = 5.0;
    std::fs::write(dir.path().join("cal.json"), serde_json::to_string(&cal).unwrap()).unwrap();
    let out = fogport(&short_run("o", &["--calibration", "cal.json"]), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("o/summary.json")).unwrap();
    assert!(summary.contains("\"sla_ms\": 5.0"));

    cal.alpha = 2.0;
    std::fs::write(dir.path().join("bad.json"), serde_json::to_string(&cal).unwrap()).unwrap();
    assert!(!fogport(&short_run("p", &["--calibration", "bad.json"]), dir.path()).status.success());
}
