use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn segbench(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_segbench"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn segbench");
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_calibrate_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let out = segbench(&["make-dataset", "--out-dir", path(&ds), "--seed", "3", "--n-train", "1", "--n-val", "2", "--n-test", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ds.join("manifest.json").is_file());

    let cal = dir.path().join("cal");
    let audit = dir.path().join("audit.txt");
    let out = segbench(&[
        "calibrate", "--manifest", path(&ds), "--predictor", "threshold_model", "--out-dir", path(&cal),
        "--audit-log", path(&audit), "--serial",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["threshold.json", "calibration_summary.csv", "curve_pr_roc.csv"] {
        assert!(cal.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(&audit).unwrap();
    assert_eq!(log.lines().count(), 4);
    for line in log.lines() {
        assert!(line.contains("case_0002") || line.contains("case_0003"), "{line}");
    }

    let ev = dir.path().join("ev");
    let null = format!("null=external:cmd={} predict-stub zeros {{input}} {{output}}", env!("CARGO_BIN_EXE_segbench"));
    let out = segbench(&[
        "evaluate", "--manifest", &format!("{}/manifest.json", path(&ds)), "--predictor", "threshold_model",
        "--predictor", "region_growing", "--predictor", &null, "--threshold", path(&cal), "--out-dir", path(&ev),
        "--workers", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("threshold_model (threshold"));
    assert!(stdout.contains("from calibration"));
    for f in ["report.json", "report.txt", "report.csv", "cases.csv", "significance.csv", "timing.csv", "timing.txt"] {
        assert!(ev.join(f).is_file(), "{f}");
    }
    let cases = fs::read_to_string(ev.join("cases.csv")).unwrap();
    assert_eq!(cases.lines().count(), 1 + 2 * 3);
    let sig = fs::read_to_string(ev.join("significance.csv")).unwrap();
    assert_eq!(sig.lines().count(), 1 + 5 * 3);

    let re = dir.path().join("re");
    let out = segbench(&["report", "--input", path(&ev), "--out-dir", path(&re)]);
    assert!(out.status.success());
    assert_eq!(fs::read(ev.join("report.txt")).unwrap(), fs::read(re.join("report.txt")).unwrap());
    assert_eq!(String::from_utf8_lossy(&out.stdout), fs::read_to_string(ev.join("report.txt")).unwrap());
}

#[test]
fn per_case_failure_exits_with_two_and_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert!(segbench(&["make-dataset", "--out-dir", path(&ds), "--n-train", "0", "--n-val", "0", "--n-test", "1"])
        .status
        .success());
    let failing = format!("external:cmd={} predict-stub fail {{input}} {{output}}", env!("CARGO_BIN_EXE_segbench"));
    let ev = dir.path().join("ev");
    let out = segbench(&["evaluate", "--manifest", path(&ds), "--predictor", &failing, "--out-dir", path(&ev)]);
    assert_eq!(out.status.code(), Some(2));
    let txt = fs::read_to_string(ev.join("report.txt")).unwrap();
    assert!(txt.contains("Failed cases"));
}

#[test]
fn external_timeout_is_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert!(segbench(&["make-dataset", "--out-dir", path(&ds), "--n-train", "0", "--n-val", "0", "--n-test", "1"])
        .status
        .success());
    let slow = format!("external:cmd={} predict-stub sleep {{input}} {{output}}", env!("CARGO_BIN_EXE_segbench"));
    let ev = dir.path().join("ev");
    let out = Command::new(env!("CARGO_BIN_EXE_segbench"))
        .args(["evaluate", "--manifest", path(&ds), "--predictor", &slow, "--out-dir", path(&ev)])
        .env("SEGBENCH_PREDICTOR_TIMEOUT_S", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(fs::read_to_string(ev.join("cases.csv")).unwrap().contains("timed out"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = segbench(&["evaluate", "--manifest", "/nonexistent/manifest.json", "--predictor", "threshold_model", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
    let out = segbench(&["calibrate", "--manifest", "/nonexistent", "--predictor", "bogus", "--out-dir", "/tmp/x"]);
    assert!(!out.status.success());
}
