// SPDX-License-Identifier: Apache-2.0

use std::process::Command;

fn weylsum(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_weylsum")).args(args).output().expect("binary runs")
}

#[test]
fn classnumber_writes_csv_and_exits_zero() {
    let out = weylsum(&["classnumber", "--delta=-23", "--delta", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# weylsum "));
    assert_eq!(lines[2], "delta,h,mu,dirichlet_h,method_cross_check_residual,error");
    assert!(lines[3].starts_with("-23,3,,"));
    assert!(lines[4].contains("square"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(weylsum(&["identity", "--delta=-7", "--m", "1"]).status.code(), Some(2));
    assert_eq!(weylsum(&["identity", "--delta=-7", "--s", "two"]).status.code(), Some(2));
    assert_eq!(weylsum(&["classnumber", "--field", "10", "--delta=-3"]).status.code(), Some(2));
    assert_eq!(weylsum(&["siegel", "--field", "5", "--format", "csv"]).status.code(), Some(2));
    assert_eq!(weylsum(&["bogus"]).status.code(), Some(2));
}

#[test]
fn tolerance_failure_exits_three() {
    let out = weylsum(&["identity", "--delta=-7", "--bound", "8", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn out_file_and_thread_cap_give_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eq.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_weylsum"))
        .args(["equidist", "--delta-range=-2000..-100", "--samples", "8", "--out"])
        .arg(&path)
        .env("WEYLSUM_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
    let single = std::fs::read_to_string(&path).unwrap();
    let multi = Command::new(env!("CARGO_BIN_EXE_weylsum"))
        .args(["equidist", "--delta-range=-2000..-100", "--samples", "8", "--out"])
        .arg(&path)
        .env("WEYLSUM_THREADS", "3")
        .status()
        .unwrap();
    assert!(multi.success());
    assert_eq!(single, std::fs::read_to_string(&path).unwrap());
    assert!(single.lines().any(|l| l.starts_with("trend,negative")));
}

#[test]
fn siegel_json_report() {
    let out = weylsum(&["siegel", "--field", "13", "--yd", "1,1,1,0", "--mq-checks", "100", "--points", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], "14");
    assert_eq!(v["discriminant_is_n_squared"], true);
    assert_eq!(v["config"]["radicand"], 13);
}
