//! End-to-end runs of the `harmonic` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn harmonic(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harmonic"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn evolve_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"engine": "quantum", "model": {"order": 2}, "input": {"alpha1": [2, 0], "alphaN": [1, 0]},
            "grid": {"kind": "time", "gt_end": 1.0, "samples": 5}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = harmonic(&["evolve", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["engine"], "quantum");
    let csv = fs::read_to_string(out.join("fano.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(out.join("metadata.json").exists());
}

#[test]
fn engine_follows_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"engine": "quantum", "model": {"order": 2}, "input": {"alpha1": [2, 0], "alphaN": [1, 0]}}"#,
    )
    .unwrap();
    let o = harmonic(&["analytic", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["engine"], "analytic");
    assert_eq!(summary["F1S"], "3/2");
}

#[test]
fn unknown_field_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(
        &cfg,
        r#"{"model": {"order": 2}, "input": {"alpha1": [2, 0], "alphaN": [1, 0], "alpha3": [0, 0]}}"#,
    )
    .unwrap();
    let o = harmonic(&["analytic", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("input.alpha3"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["evolve", "--config", "/nonexistent/run.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["ensemble", "--order", "2", "--alpha1", "2", "--alphaN", "1", "--gt-end", "1", "--count", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("noise.count"), "{}", stderr(&o));
}

#[test]
fn integrator_failure_exits_with_numerical_status() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["classical", "--order", "8", "--alpha1", "1000", "--alphaN", "1", "--gt-end", "1"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn qfunc_writes_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(
        &["qfunc", "--order", "2", "--alpha1", "2", "--alphaN", "1", "--gt-end", "1", "--samples", "2", "--times", "0,0.5", "--resolution", "21"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["qfunc_mode1_gt0.csv", "qfunc_modeN_gt0.csv", "qfunc_mode1_gt0.5.csv", "qfunc_modeN_gt0.5.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().next(), Some("re,im,q"));
        assert_eq!(text.lines().count(), 1 + 21 * 21);
    }
}

#[test]
fn scan_writes_grid_with_blank_vacuum() {
    let dir = tempfile::tempdir().unwrap();
    let o = harmonic(&["scan-global-fano", "--alpha1", "0:2:3", "--alphaN", "0,1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("global_fano.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "alpha1,alpha2,FG1,FG2");
    assert_eq!(lines[1], "0,0,,");
    assert_eq!(lines.len(), 7);
}

#[test]
fn table_reports_rows_over_budget() {
    let dir = tempfile::tempdir().unwrap();
    // at r = 1 the N = 1 blocks reach dimension 29 and the N = 2 blocks 27
    let o = harmonic(&["reproduce-table", "--orders", "1,2", "--r", "1", "--samples", "21", "--max-dim", "28"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("budget"), "{text}");
    let csv = fs::read_to_string(dir.path().join("table_harmonic.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][1], "");
    assert!(rows[0][8].contains("29"));
    assert_eq!(rows[1][3], "5/6");
    assert!(rows[1][1].parse::<f64>().unwrap() > 0.5);
}

#[test]
fn ensemble_output_is_seed_stable_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let o = harmonic(
            &["ensemble", "--order", "2", "--alpha1", "2", "--alphaN", "1", "--gt-end", "1", "--samples", "5", "--count", "300", "--seed", seed, "--threads", "2"],
            &out,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("ensemble.csv")).unwrap()
    };
    assert_eq!(run("4", "a"), run("4", "b"));
    assert_ne!(run("4", "a"), run("5", "c"));
}
