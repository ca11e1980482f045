//! End-to-end tests of the `nslab` binary: exit-code categories,
//! artifact chaining, determinism, and config handling.

use std::path::Path;
use std::process::{Command, Output};

fn nslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslab"))
        .args(args)
        .output()
        .expect("spawn nslab")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn basis_writes_manifest_and_provenance() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = nslab(&["basis", "--dim", "2", "--modes", "8", "--out", dir.path().to_str().unwrap()]);
    assert_exit(&out, 0);
    let manifest = String::from_utf8(read(dir.path(), "basis.txt")).expect("utf8");
    assert!(manifest.contains("dim=2 modes=8"));
    assert_eq!(manifest.lines().count(), 9, "header plus one line per mode");
    let run: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "run.json")).expect("run.json");
    assert_eq!(run["command"], "basis");
    assert_eq!(run["config"]["modes"], 8);
    assert_eq!(run["artifacts"][0], "basis.txt");
}

#[test]
fn unknown_flag_exits_two() {
    let out = nslab(&["basis", "--frobnicate"]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--frobnicate"), "stderr must name the flag: {stderr}");
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("sim.json");
    std::fs::write(&config, r#"{"dim": 2, "modez": 8}"#).expect("write config");
    let out = nslab(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("modez"), "stderr must name the bad key: {stderr}");
}

#[test]
fn simulate_is_deterministic_across_runs() {
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--modes".into(),
            "8".into(),
            "--dt".into(),
            "0.005".into(),
            "--t-final".into(),
            "0.1".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    for dir in [dir_a.path(), dir_b.path()] {
        let argv: Vec<String> = args(dir);
        let refs: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_exit(&nslab(&refs), 0);
    }
    assert_eq!(
        read(dir_a.path(), "trajectory.nstrj"),
        read(dir_b.path(), "trajectory.nstrj")
    );
    assert_eq!(
        read(dir_a.path(), "trajectory.json"),
        read(dir_b.path(), "trajectory.json")
    );
}

#[test]
fn dataset_model_eval_chain_shares_one_directory() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().to_str().unwrap();
    assert_exit(
        &nslab(&[
            "gen-data", "--dim", "2", "--modes", "12", "--n", "16", "--d-h", "4", "--d-y",
            "8", "--active-modes", "4", "--nu", "0.1", "--dt", "0.005", "--t-final", "0.2",
            "--t-star", "0.2", "--seed", "3", "--out", out,
        ]),
        0,
    );
    assert_exit(
        &nslab(&[
            "train", "--hidden", "16", "--epochs", "10", "--batch-size", "4", "--out", out,
        ]),
        0,
    );
    assert_exit(&nslab(&["eval", "--n-test", "8", "--out", out]), 0);

    let eval: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "eval.json")).expect("eval.json");
    assert_eq!(eval["n_test"], 8);
    assert!(eval["total"].as_f64().expect("total").is_finite());
    assert!(eval["zero_baseline"].as_f64().expect("baseline") > 0.0);

    // The model records the architecture the dataset implied.
    let model: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "model.json")).expect("model.json");
    assert_eq!(model["arch"]["input_dim"], 4);
    assert_eq!(model["arch"]["output_dim"], 8);
}

#[test]
fn unstable_simulation_exits_three() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = nslab(&[
        "simulate",
        "--dt",
        "50",
        "--no-stability-guard",
        "--nu",
        "1.0",
        "--t-final",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 3);
}

#[test]
fn missing_dataset_exits_four() {
    let dir = tempfile::tempdir().expect("tempdir");
    let missing = dir.path().join("nope");
    let out = nslab(&[
        "train",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 4);
}

#[test]
fn corrupted_dataset_exits_four() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = dir.path().to_str().unwrap();
    assert_exit(
        &nslab(&[
            "gen-data", "--dim", "2", "--modes", "8", "--n", "4", "--d-h", "4", "--d-y", "4",
            "--active-modes", "4", "--nu", "0.1", "--dt", "0.01", "--t-final", "0.1",
            "--t-star", "0.1", "--out", out,
        ]),
        0,
    );
    let payload = dir.path().join("inputs.f64");
    let mut bytes = std::fs::read(&payload).expect("payload");
    bytes[0] ^= 1;
    std::fs::write(&payload, bytes).expect("rewrite");
    let output = nslab(&["train", "--epochs", "1", "--out", out]);
    assert_exit(&output, 4);
    assert!(String::from_utf8_lossy(&output.stderr).contains("checksum"));
}

#[test]
fn verify_projection_writes_tables() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("verify.json");
    std::fs::write(
        &config,
        r#"{"projection": {"n_values": [10, 100], "d_h_values": [8], "replicates": 4}}"#,
    )
    .expect("write config");
    let out = nslab(&[
        "verify",
        "--suite",
        "projection",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let csv = String::from_utf8(read(dir.path(), "projection.csv")).expect("utf8");
    assert!(csv.starts_with("d_h,n,"), "table header present: {csv}");
    assert_eq!(csv.lines().count(), 3, "header plus one row per (d_H, N) cell");
}

#[test]
fn sensors_sweep_reports_the_requirement() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = nslab(&[
        "sensors",
        "--modes",
        "6",
        "--d",
        "6",
        "--grids",
        "3,5",
        "--probe-n",
        "17",
        "--epsilon",
        "0.3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let summary: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "sensors.json")).expect("sensors.json");
    assert_eq!(summary["sweeps"].as_array().expect("sweeps").len(), 2);
    assert!(summary["requirement"]["points_per_axis"].as_u64().expect("req") >= 3);
}
