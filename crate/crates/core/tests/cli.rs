use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn qweyl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qweyl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("every stdout line is JSON"))
        .collect()
}

fn summary(out: &Output) -> Value {
    lines(out).last().expect("summary line")["summary"].clone()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qweyl-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_suite_passes() {
    let out = qweyl(&["verify-suite", "--p", "3", "--N", "3", "--K", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&out);
    assert_eq!(s["status"], "pass");
    assert_eq!(s["failed"], 0);
    assert_eq!(s["command"], "verify-suite");
}

#[test]
fn output_is_deterministic() {
    let a = qweyl(&["section", "--N", "4", "--K", "6"]);
    let b = qweyl(&["section", "--N", "4", "--K", "6"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn configuration_errors_exit_2() {
    for args in [
        vec!["section", "--p", "2"],
        vec!["section", "--N", "0"],
        vec!["section", "--N", "17"],
        vec!["section", "--K", "13"],
        vec!["section", "--p", "9"],
        vec!["patch", "--p", "global"],
        vec!["normalize", "x +"],
        vec!["frobnicate"],
    ] {
        let out = qweyl(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).expect("error JSON on stderr");
        assert!(err["error"].is_string() && err["message"].is_string());
    }
    let out = qweyl(&["section", "--p", "2"]);
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "PrimeTwoUnsupported");
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(qweyl(&["--help"]).status.code(), Some(0));
    assert_eq!(qweyl(&["--version"]).status.code(), Some(0));
}

#[test]
fn section_invert_conjugate_pipeline() {
    let path = tmp("section.json");
    let out = qweyl(&["section", "--N", "3", "--K", "6", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(saved["src"]["label"], "standard");
    for cmd in ["invert", "conjugate"] {
        let out = qweyl(&[cmd, "--in", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        assert_eq!(summary(&out)["status"], "pass");
    }
}

#[test]
fn stratify_then_cocycle() {
    let conn = tmp("conn.json");
    std::fs::write(
        &conn,
        r#"{"rank":1,"base":{"p":3,"n":1,"label":"standard","phi":["x^3"]},"N":3,"matrices":[[["3*x + 3"]]]}"#,
    )
    .unwrap();
    let strat = tmp("strat.json");
    let out = qweyl(&["stratify", "--in", conn.to_str().unwrap(), "--out", strat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = qweyl(&["cocycle", "--in", strat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    // a connection with no integral divided powers is reported, not stratified
    std::fs::write(
        &conn,
        r#"{"rank":1,"base":{"p":3,"n":1,"label":"standard","phi":["x^3"]},"N":3,"matrices":[[["1"]]]}"#,
    )
    .unwrap();
    let out = qweyl(&["stratify", "--in", conn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(&out)["status"], "fail");
}

#[test]
fn normalize_and_patch() {
    let out = qweyl(&["normalize", "nabla*x - q*x*nabla", "--N", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let out = qweyl(&["patch", "--p", "global", "--invert-2", "--N", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["status"], "pass");
    let human = qweyl(&["dual-basis", "--human", "--K", "2"]);
    assert_eq!(human.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&human.stdout).contains("summary"));
}
