use std::path::Path;
use std::process::{Command, Output};

fn rsop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsop")).args(args).output().unwrap()
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap()
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = rsop(&[
            "simulate",
            "--scenario",
            "table6-3x7",
            "--slots",
            "500",
            "--reps",
            "2",
            "--seed",
            "9",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for file in ["simulation.csv", "manifest.json"] {
        assert_eq!(read(a.path(), file), read(b.path(), file), "{file}");
    }
    let text = String::from_utf8(read(a.path(), "simulation.csv")).unwrap();
    assert!(text.starts_with("# rsop "));
    assert!(text.lines().next().unwrap().ends_with("seed=9"));
}

#[test]
fn analyze_sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = rsop(&[
        "analyze",
        "--scenario",
        "fig5-sensing",
        "--axis",
        "p=0.2,0.4,0.6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(read(dir.path(), "analysis.csv")).unwrap();
    // header comment, column line, three rows
    assert_eq!(text.lines().count(), 5);
    let manifest: serde_json::Value = serde_json::from_slice(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["experiment"], "analyze");
    assert_eq!(manifest["scenario"], "fig5-sensing");
}

#[test]
fn optimize_and_upper_bound_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = rsop(&["optimize", "--scenario", "table5-3x7", "--grid", "8x8", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("optimum.csv").exists());
    let out = rsop(&["upper-bound", "--scenario", "default", "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("upper_bound.csv").exists());
}

#[test]
fn scenarios_lists_bundled_files() {
    let out = rsop(&["scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("table5-7x3")));
    let out = rsop(&["scenarios", "--show", "default"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("[network]"));
}

#[test]
fn bad_input_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["analyze", "--scenario", "no-such-scenario", "--out", d],
        vec!["optimize", "--grid", "8by8", "--out", d],
        vec!["adapt", "--algorithm", "3", "--out", d],
        vec!["analyze", "--axis", "bogus=1:2:1", "--out", d],
    ] {
        let out = rsop(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: "), "{args:?}");
    }
}
