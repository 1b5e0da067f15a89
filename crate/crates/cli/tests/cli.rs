//! End-to-end tests of the command-line interface: exit codes, artifact
//! schemas and the deterministic self-test.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tshelm"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

const HARMONIC: &str = r#"
scale = "union: [0,1]; points: 1.5 2; dense_step: 0.001"
dimension = 1
seed = 42

[field]
xq = ["p1"]
xp = ["-q1"]
"#;

const DAMPED: &str = r#"
dimension = 1

[field]
xq = ["p1"]
xp = ["-q1 - 0.1*p1"]
"#;

#[test]
fn check_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), HARMONIC);
    let out = run(&[
        "check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = write_config(dir.path(), DAMPED);
    let out = run(&[
        "check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("not_hamiltonian"));
    assert!(stdout.contains("1.000e-1"));
}

#[test]
fn errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // Missing field section.
    let cfg = write_config(dir.path(), "dimension = 1\n");
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Unparseable expression with a position in the message.
    let cfg = write_config(
        dir.path(),
        "dimension = 1\n[field]\nxq = [\"p1 +\"]\nxp = [\"-q1\"]\n",
    );
    let out = run(&["check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));

    // Bad scale literal.
    let out = run(&["calculus", "--scale", "union: [0,1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), HARMONIC);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("check_report.json")).unwrap())
            .unwrap();
    for key in [
        "verdict",
        "trace_violation",
        "asym_qp",
        "asym_pq",
        "tolerance",
        "samples",
        "worst",
    ] {
        assert!(report.get(key).is_some(), "missing key {key}");
    }
    assert_eq!(report["verdict"], "hamiltonian");
    assert!(report["worst"]["location"].is_array());
}

#[test]
fn tol_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DAMPED);
    // With a loose tolerance the damped field passes.
    let out = run(&[
        "check",
        "--config",
        cfg.to_str().unwrap(),
        "--tol",
        "0.5",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn simulate_writes_fixed_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
scale = "points: 0 1 2"
dimension = 1
[hamiltonian]
expr = "(q1^2 + p1^2)/2"
[simulate]
q0 = [1.0]
p0 = [0.0]
"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,kind,q1,p1,newton_iters,residual");
    // Hand recursion: q1 = 1, p1 = -1; q2 = 0, p2 = -1.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0,initial,1,0"));
    assert!(rows[1].starts_with("1,scattered,1,-1"));
    assert!(rows[2].starts_with("2,scattered,0,-1"));

    let energy = fs::read_to_string(out_dir.join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,energy\n"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("simulate_summary.json")).unwrap())
            .unwrap();
    assert!(summary["residual_star1"].as_f64().unwrap() <= 1e-10);
    assert!(summary["residual_star2"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn simulate_integral_form_matches_derivative_form() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
scale = "points: 0 0.25 0.5 0.75 1"
dimension = 1
[hamiltonian]
expr = "(q1^2 + p1^2)/2"
[simulate]
q0 = [1.0]
p0 = [0.0]
"#;
    let cfg = write_config(dir.path(), base);
    let out_a = dir.path().join("a");
    assert_eq!(
        run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let cfg2 = write_config(
        &dir.path().join("."),
        &base.replace("[simulate]", "[simulate]\nform = \"integral\""),
    );
    let out_b = dir.path().join("b");
    assert_eq!(
        run(&["simulate", "--config", cfg2.to_str().unwrap(), "--out", out_b.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let a = fs::read_to_string(out_a.join("trajectory.csv")).unwrap();
    let b = fs::read_to_string(out_b.join("trajectory.csv")).unwrap();
    // Same states; only diagnostics columns may differ.
    let states = |s: &str| -> Vec<(String, String)> {
        s.lines()
            .skip(1)
            .map(|l| {
                let cols: Vec<&str> = l.split(',').collect();
                (cols[2].to_string(), cols[3].to_string())
            })
            .collect()
    };
    for ((qa, pa), (qb, pb)) in states(&a).into_iter().zip(states(&b)) {
        let (qa, pa): (f64, f64) = (qa.parse().unwrap(), pa.parse().unwrap());
        let (qb, pb): (f64, f64) = (qb.parse().unwrap(), pb.parse().unwrap());
        assert!((qa - qb).abs() <= 1e-10 && (pa - pb).abs() <= 1e-10);
    }
}

#[test]
fn calculus_table_on_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "calculus",
        "--scale",
        "points: 0 1 2",
        "--format",
        "csv",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(out_dir.join("calculus.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,sigma,rho,mu,nu,class"));
    let mus: Vec<&str> = lines.map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(mus, vec!["1", "1", "0"]);
}

#[test]
fn calculus_accepts_both_literal_spellings() {
    for literal in [
        "union: [0,1]; points: 1.25 1.5 2; dense_step: 0.001",
        "union: [0, 1]; 1.25; 1.5; 2; dense_step: 0.001",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&[
            "calculus",
            "--scale",
            literal,
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "literal `{literal}`");
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("4 segments"));
    }
}

/// The Helmholtz conditions contain no time-scale quantity: the emitted
/// report is byte-identical across different scales.
#[test]
fn check_report_ignores_the_time_scale() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for (tag, scale) in [
        ("a", "points: 0 1 2"),
        ("b", "union: [0, 0.5]; 0.7 1; dense_step: 0.01"),
    ] {
        let cfg = write_config(
            &dir.path().join("."),
            &format!("scale = \"{scale}\"\n{DAMPED}"),
        );
        let out_dir = dir.path().join(tag);
        let out = run(&[
            "check",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(1));
        reports.push(fs::read(out_dir.join("check_report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

/// Acceptance criterion 10: running the self-test twice with the same seed
/// produces byte-identical artifacts.
#[test]
fn selftest_artifacts_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&["selftest", "--seed", "42", "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.contains(&"criteria.json".to_string()));
    assert!(names.contains(&"catalog_reports.json".to_string()));
    for name in &names {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between runs");
    }
    println!("PASS criterion 10 selftest artifacts byte-identical ({} files)", names.len());
}
