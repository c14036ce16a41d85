//! End-to-end checks of the `phgrid` binary and the golden files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phgrid::io::{network_to_string, parse_network, parse_scenario, read_sweep_spec, scenario_to_string};
use phgrid::scenarios::{scenario_by_name, two_machine_default, SweepParameter};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn read_golden(name: &str) -> String {
    std::fs::read_to_string(golden(name)).unwrap()
}

fn phgrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phgrid")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn golden_network_matches_default() {
    assert_eq!(network_to_string(&two_machine_default()).unwrap(), read_golden("table1.toml"));
    assert_eq!(parse_network(&read_golden("table1.toml")).unwrap(), two_machine_default());
}

#[test]
fn golden_scenario_matches_export() {
    let text = read_golden("symmetric.toml");
    let sc = scenario_by_name("symmetric").unwrap();
    assert_eq!(scenario_to_string(&sc).unwrap(), text);
    let back = parse_scenario(&text).unwrap();
    assert_eq!(back.network, sc.network);
    assert_eq!(back.horizon, sc.horizon);

    let out = phgrid(&["scenario", "export", "symmetric"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn golden_sweep_spec_parses() {
    let spec = read_sweep_spec(&golden("damping_sweep.toml")).unwrap();
    assert_eq!(spec.parameter, SweepParameter::DampingScale);
    assert_eq!(spec.factors, vec![1.0, 2.0, 4.0]);
    assert_eq!(spec.base.name, "symmetric-desk");
}

#[test]
fn verify_accepts_default_network() {
    let out = phgrid(&["verify", "--net", golden("table1.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("state_dim = 24"));
    assert!(text.contains("w_skew_symmetric = true"));
}

#[test]
fn verify_names_lossless_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = read_golden("table1.toml").replacen("resistance = 3.0", "resistance = 0.0", 1);
    std::fs::write(&path, text).unwrap();
    let out = phgrid(&["verify", "--net", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ln6"), "{}", stderr(&out));
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.toml");
    std::fs::write(&net, "[[bus]]\nid = \"zero\"\n").unwrap();
    let out = phgrid(&["verify", "--net", net.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let csv = dir.path().join("traj.csv");
    std::fs::write(&csv, "0.0,1.0,2.0\n0.1,1.0,2.0\n").unwrap();
    let out = phgrid(&["analyze", "--traj", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = phgrid(&["scenario", "export", "no-such-case"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_matches_golden_head() {
    let dir = tempfile::tempdir().unwrap();
    let net = golden("table1.toml");
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = phgrid(&[
            "simulate",
            "--net",
            net.to_str().unwrap(),
            "--t-end",
            "0.002",
            "--dt",
            "50e-6",
            "--sample-every",
            "0.001",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_path).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    let head: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    assert_eq!(head, read_golden("simulate_head.csv"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn analyze_reports_a_classification() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let out = phgrid(&[
        "simulate",
        "--scenario",
        "symmetric",
        "--t-end",
        "2",
        "--dt",
        "1e-4",
        "--sample-every",
        "0.002",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = dir.path().join("r.toml");
    let out = phgrid(&[
        "analyze",
        "--traj",
        csv.to_str().unwrap(),
        "--net",
        golden("table1.toml").to_str().unwrap(),
        "--report-out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.starts_with("classification = "), "{text}");
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}
