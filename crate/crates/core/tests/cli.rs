use std::process::{Command, Output};

use falconpack::bench::CompareReport;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_falconpack"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_pass_exits_zero() {
    let o = run(&["verify", "--dims", "7,32,3", "--n", "2048"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn infeasible_geometry_exits_two() {
    let o = run(&["verify", "--dims", "64,4,3", "--n", "2048"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn bad_arguments_exit_three() {
    for args in [
        &["verify", "--dims", "7,32"][..],
        &["tile", "--dims", "14,64,3", "--n", "3000"],
        &["verify", "--dims", "14,64,3", "--group", "5"],
        &["compare"],
        &["compare", "--preset", "nope"],
        &["simulate", "--dims", "7,32,3", "--backend", "paillier"],
        &["frobnicate"],
    ] {
        assert_eq!(run(args).status.code(), Some(3), "{args:?}");
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn tile_formats() {
    let o = run(&["tile", "--dims", "14,576,3", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["tile"]["c_x"], 4);
    assert_eq!(v["tile"]["c_w"], 4);
    let csv = stdout(&run(&["tile", "--dims", "14,576,3", "--format", "csv"]));
    assert!(csv.lines().count() >= 2);
}

#[test]
fn compare_config_file_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    std::fs::write(
        &cfg,
        r#"{"entries": [{"dims": [14, 576, 3], "n": 4096}, {"dims": [7, 960, 3], "n": 8192}], "format": "csv"}"#,
    )
    .unwrap();
    let out = dir.path().join("rows.csv");
    let o = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = CompareReport::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.cheetah_ratio("(14,576,3) N=4096").unwrap() > 1.5);

    std::fs::write(&cfg, r#"{"entries": [{"dims": [14, 576], "n": 4096}]}"#).unwrap();
    assert_eq!(
        run(&["compare", "--config", cfg.to_str().unwrap()]).status.code(),
        Some(3)
    );
    let missing = dir.path().join("missing.json");
    assert_eq!(
        run(&["compare", "--config", missing.to_str().unwrap()]).status.code(),
        Some(3)
    );
}

#[test]
fn compare_json_is_deterministic_across_thread_counts() {
    let one = Command::new(env!("CARGO_BIN_EXE_falconpack"))
        .args(["compare", "--preset", "all", "--format", "json"])
        .env("FALCONPACK_THREADS", "1")
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_falconpack"))
        .args(["compare", "--preset", "all", "--format", "json"])
        .env("FALCONPACK_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, many.stdout);
    let report = CompareReport::from_json(&stdout(&one)).unwrap();
    assert!(!report.skipped.is_empty());
}

#[test]
fn simulate_replays_identically() {
    let args = [
        "simulate", "--dims", "7,48,3", "--group", "2", "--seed", "9", "--format", "json",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["transcript"]["input_ciphertext_bytes"], v["model"]["input_bytes"]);
    let c = run(&[
        "simulate", "--dims", "7,48,3", "--group", "2", "--seed", "10", "--format", "json",
    ]);
    assert_ne!(a.stdout, c.stdout);
}
