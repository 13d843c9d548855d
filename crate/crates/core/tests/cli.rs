use std::process::{Command, Output};

fn metallic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metallic")).args(args).output().unwrap()
}

#[test]
fn catalog_lists_entries() {
    let out = metallic(&["catalog"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["anti_circle", "example1", "example2", "linear_chain", "linear_slant", "slant_circle", "sphere"] {
        assert!(text.lines().any(|l| l == name), "missing {name}");
    }
}

#[test]
fn verify_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = metallic(&[
        "verify", "example2", "a=3", "--samples", "10", "--seed", "2", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["metadata"]["entry"], "example2");
    assert_eq!(report["metadata"]["seed"], 2);
}

#[test]
fn suite_selection_and_mode() {
    let out = metallic(&["verify", "slant_circle", "--suite", "slant", "--mode", "fd", "--samples", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("slant"));
    assert!(!text.contains("inheritance "));
}

#[test]
fn analyze_prints_json() {
    let out = metallic(&["analyze", "anti_circle", "--samples", "3"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("\"schema_version\""));
}

#[test]
fn exit_codes() {
    assert_eq!(metallic(&["verify", "no_such_entry"]).status.code(), Some(2));
    assert_eq!(metallic(&["verify", "example2", "a=0"]).status.code(), Some(3));
    assert_eq!(metallic(&["verify", "example2", "bogus=1"]).status.code(), Some(3));
    assert_eq!(metallic(&["verify", "example1", "p=1.5"]).status.code(), Some(3));
    assert_eq!(metallic(&["verify", "example2", "--samples", "0"]).status.code(), Some(3));
    assert_eq!(metallic(&["verify", "--bogus"]).status.code(), Some(3));
    let out = metallic(&["verify", "example2", "--samples", "3", "--out", "/nonexistent/dir/r.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn failing_check_exits_one() {
    let out = metallic(&["verify", "example2", "--samples", "5", "--tol-connection", "1e-30"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("overall: FAIL"));
}
