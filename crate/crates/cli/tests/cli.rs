use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gpdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpdm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_segment(dir: &Path, n: usize) -> (String, String) {
    let csv = dir.join("cloud.csv");
    let meta = dir.join("boundary.json");
    let rows: Vec<String> = (0..n)
        .map(|i| format!("{:e},0", i as f64 / (n - 1) as f64))
        .collect();
    fs::write(&csv, rows.join("\n") + "\n").unwrap();
    fs::write(
        &meta,
        format!("{{\"boundary_ids\": [0, {}], \"d\": 1}}", n - 1),
    )
    .unwrap();
    (
        csv.to_str().unwrap().to_string(),
        meta.to_str().unwrap().to_string(),
    )
}

#[test]
fn forward_error_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = gpdm(&[
        "forward-error",
        "--fixture",
        "semi-ellipse",
        "--n",
        "100",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = read_json(&dir.path().join("forward_error.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["config"]["n"], 100);
    let csv = fs::read_to_string(dir.path().join("forward_error.csv")).unwrap();
    assert!(csv.starts_with("id,x0,x1,abs_error\n"));
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let run = gpdm(&[
            "solve",
            "--fixture",
            "semi-torus-l2",
            "--mode",
            "random",
            "--seed",
            "7",
            "--n",
            "256",
            "--k",
            "16",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("solution.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn zero_modes_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = gpdm(&[
        "eigs",
        "--fixture",
        "semi-circle",
        "--n",
        "100",
        "--modes",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    let summary = read_json(&dir.path().join("eigs.json"));
    assert_eq!(summary["lambdas"].as_array().map(Vec::len), Some(0));
}

#[test]
fn usage_errors_exit_two_without_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["solve", "--fixture", "no-such", "--n", "10", "--out", out],
        &[
            "solve",
            "--fixture",
            "semi-ellipse",
            "--n",
            "50",
            "--ghost-layers",
            "11",
            "--out",
            out,
        ],
        &[
            "solve",
            "--fixture",
            "semi-torus-l3",
            "--n",
            "50",
            "--out",
            out,
        ],
        &[
            "tune",
            "--fixture",
            "semi-ellipse",
            "--n",
            "50",
            "--grid",
            "1,2",
            "--out",
            out,
        ],
        &["solve", "--bogus"],
    ];
    for args in cases {
        let run = gpdm(args);
        assert_eq!(code(&run), 2, "{args:?}");
    }
    assert!(!dir.path().join("solve.json").exists());
    assert!(!dir.path().join("tune.json").exists());
}

#[test]
fn numerical_failure_exits_three_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // a grid far above the squared diameter leaves every kernel at 1 and the slope flat
    let run = gpdm(&[
        "tune",
        "--fixture",
        "semi-ellipse",
        "--n",
        "100",
        "--grid",
        "20,22,4",
        "--out",
        out,
    ]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = read_json(&dir.path().join("tune.json"));
    assert_eq!(summary["status"], "failed");
    assert!(summary["error"].as_str().unwrap().contains("tuning failed"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{ "fixture": "semi-ellipse", "n": 60, "k": 30, "out": "ignored" }"#,
    )
    .unwrap();
    let run = gpdm(&[
        "forward-error",
        "--config",
        config.to_str().unwrap(),
        "--n",
        "80",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let summary = read_json(&dir.path().join("forward_error.json"));
    assert_eq!(summary["config"]["n"], 80);
    assert_eq!(summary["config"]["k"], 30);
    let csv = fs::read_to_string(dir.path().join("forward_error.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    fs::write(&config, r#"{ "fixture": "semi-ellipse", "size": 60 }"#).unwrap();
    let run = gpdm(&["solve", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&run), 2);
}

#[test]
fn file_based_dirichlet_solve_recovers_constant() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, boundary) = write_segment(dir.path(), 41);
    let config = dir.path().join("run.json");
    fs::write(
        &config,
        r#"{ "bc": "dirichlet", "k": 40, "constants": { "f": 0.0, "g": 1.0 } }"#,
    )
    .unwrap();
    let run = gpdm(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--cloud",
        &cloud,
        "--boundary",
        &boundary,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,x0,x1,u_hat,truth,abs_error"));
    for line in lines {
        let u: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((u - 1.0).abs() < 1e-8, "{line}");
    }
}

#[test]
fn file_solve_without_constants_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (cloud, boundary) = write_segment(dir.path(), 21);
    let run = gpdm(&[
        "solve",
        "--cloud",
        &cloud,
        "--boundary",
        &boundary,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 2);
}
