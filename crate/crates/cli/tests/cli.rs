use std::path::Path;
use std::process::{Command, Output};

fn edgefair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgefair")).args(args).output().unwrap()
}

fn example() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/example/scenario.toml").to_str().unwrap().to_owned()
}

#[test]
fn solve_bundled_example() {
    let out = edgefair(&["solve", &example(), "--deterministic"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bundle: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(bundle["schema_version"], 1);
    assert!(bundle["created_unix_s"].is_null());
    assert_eq!(bundle["report"]["feasible"], true);
}

#[test]
fn timestamps_only_without_deterministic() {
    let out = edgefair(&["solve", &example(), "--mode", "local"]);
    let bundle: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(bundle["created_unix_s"].is_u64());
}

#[test]
fn verify_monotonicity_suite() {
    let out = edgefair(&["verify", "--suite", "monotonicity", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("PASS monotonicity"));
}

#[test]
fn verify_reports_skipped_oracles() {
    let out = edgefair(&["verify", &example(), "--suite", "plan"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["suites"][0]["status"], "skipped");
}

#[test]
fn impossible_deadline_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let src = Path::new(&example()).parent().unwrap().to_path_buf();
    let doc = std::fs::read_to_string(src.join("scenario.toml")).unwrap();
    let first = doc.lines().find(|l| l.starts_with("deadline_s")).unwrap();
    let bad = doc.replacen(first, "deadline_s = 1e-9", 1).replace("traces/", &format!("{}/traces/", src.display()));
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, bad).unwrap();
    let out = edgefair(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "security_levels = 1\n[link]\nbandwidth_max_hz = -1.0\npower_max_w = 0.2\n").unwrap();
    let out = edgefair(&["solve", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("link.bandwidth_max_hz"));
    assert_eq!(edgefair(&["solve", "missing.toml"]).status.code(), Some(2));
    assert_eq!(edgefair(&["solve", &example(), "--mode", "greedy"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_csv() {
    let trace = Path::new(&example()).parent().unwrap().join("traces/ue0.csv");
    let out = edgefair(&["sweep", trace.to_str().unwrap(), "--resolution", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha_l,alpha_u,car,fpr,fnr,ofr,utility"));
    assert_eq!(lines.count(), 10);
}

#[test]
fn bounds_report_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bounds.json");
    let out = edgefair(&["bounds", &example(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    let (obj, ub) = (v["objective"].as_f64().unwrap(), v["upper_bound"].as_f64().unwrap());
    assert!(obj <= ub + 1e-9);
    assert!(v["relative_gap_pct"].is_f64());
}
