use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wen")).args(args).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn case_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/case13_8.json").to_string()
}

#[test]
fn solve_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wen(&["solve", "--case", &case_path(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sol = json(&dir.path().join("solution.json"));
    assert_eq!(sol["schema_version"], 1);
    assert_eq!(sol["report"], "solution");
    assert_eq!(sol["exact"], true);
    let ex = json(&dir.path().join("exactness.json"));
    assert!(ex["max_residual"].as_f64().unwrap() <= 1e-5);
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert!(csv.starts_with("t,"));
    assert_eq!(csv.lines().count(), 25);
    let res = fs::read_to_string(dir.path().join("exactness.csv")).unwrap();
    assert_eq!(res.lines().count(), 25);
}

#[test]
fn profiles_export_one_row_per_period() {
    let dir = tempfile::tempdir().unwrap();
    let o = wen(&["profiles", &case_path(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("profiles.csv")).unwrap();
    assert!(csv.starts_with("t,price,"));
    assert_eq!(csv.lines().count(), 25);
}

#[test]
fn tighter_gap_keeps_the_objective() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(wen(&["solve", "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(
        wen(&["solve", "--gap", "1e-6", "--out", b.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let obj = |p: &Path| json(&p.join("solution.json"))["objective"].as_f64().unwrap();
    let (x, y) = (obj(&a), obj(&b));
    assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = wen(&["compare", &case_path(), "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["compare.json", "compare.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = wen(&[
        "solve",
        "--case",
        "/nonexistent/case.json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot read"));
}

#[test]
fn malformed_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"name\": 3").unwrap();
    let o = wen(&["dsm", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn hull_verify_passes_and_honors_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = wen(&[
        "hull-verify",
        "--samples",
        "2000",
        "--random",
        "8",
        "--format",
        "json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("hull-verify.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["total_violations"], 0);
    assert!(!dir.path().join("hull-verify.csv").exists());
}

#[test]
fn dsm_writes_both_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let o = wen(&["dsm", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("dsm.json"));
    assert!(r["dsm_cost"].as_f64().unwrap() <= r["co_opt_cost"].as_f64().unwrap());
    let csvs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("schedule-")
        })
        .count();
    assert_eq!(csvs, 2);
}

#[test]
fn bad_option_is_an_input_error() {
    assert_eq!(wen(&["solve", "--gap", "tight"]).status.code(), Some(1));
    assert_eq!(wen(&["--help"]).status.code(), Some(0));
}
