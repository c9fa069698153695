use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn splan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = splan(args);
    assert!(
        out.status.success(),
        "splan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 8] = [
    "--set",
    "sim.num_users=30",
    "--set",
    "sim.num_log_sessions=200",
    "--set",
    "sim.catalog_size=300",
    "--set",
    "train.quit.epochs=40",
];

fn with_small<'a>(cmd: &'a str, out: &'a str) -> Vec<&'a str> {
    let mut args = vec![cmd, "--out", out];
    args.extend_from_slice(&SMALL);
    args
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        ok(&with_small("simulate", dir.path().to_str().unwrap()));
    }
    for name in ["sessions.jsonl", "ground_truth.json", "users.json", "manifest.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

fn write_example(dir: &Path) -> String {
    let path = dir.join("example.json");
    std::fs::write(
        &path,
        r#"{"horizon":2,"num_items":2,"item_ids":["A","B"],
            "reward":[[0.5,0.35],[0.5,0.35]],"quit":[[0.6,0.2],[1.0,1.0]]}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn plan_on_example_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_example(dir.path());
    let out = dir.path().join("out");
    let stdout = ok(&["plan", "--mdp", &model, "--strategy", "ssp", "--out", out.to_str().unwrap()]);
    let record: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(record["path"], serde_json::json!(["B", "A"]));
    assert!((record["expected_ipv"].as_f64().unwrap() - 0.75).abs() < 1e-12);

    let stored: Value = serde_json::from_slice(&std::fs::read(out.join("plan.json")).unwrap()).unwrap();
    assert_eq!(stored["kind"], "plan");
    assert_eq!(stored["data"], record);
    assert!(stored["config_hash"].as_str().unwrap().len() == 64);

    let stdout = ok(&["plan", "--mdp", &model, "--strategy", "greedy", "--out", out.to_str().unwrap()]);
    let record: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(record["path"], serde_json::json!(["A", "A"]));
    assert!((record["expected_ipv"].as_f64().unwrap() - 0.70).abs() < 1e-12);
}

#[test]
fn failures_have_distinct_exit_codes_and_json_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let missing = splan(&["plan", "--mdp", "/nonexistent/model.json", "--out", out]);
    let config = splan(&["simulate", "--set", "sim.colour=3", "--out", out]);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"horizon": 2}"#).unwrap();
    let schema = splan(&["plan", "--mdp", bad.to_str().unwrap(), "--out", out]);
    let infeasible = dir.path().join("tiny.json");
    std::fs::write(
        &infeasible,
        r#"{"horizon":3,"num_items":1,"item_ids":["A"],"reward":[[0.5],[0.5],[0.5]],"quit":[[0.1],[0.1],[0.1]]}"#,
    )
    .unwrap();
    let data = splan(&["plan", "--mdp", infeasible.to_str().unwrap(), "--dedup", "--out", out]);

    let codes: Vec<i32> = [&missing, &config, &schema, &data]
        .iter()
        .map(|o| o.status.code().unwrap())
        .collect();
    assert_eq!(codes, vec![3, 2, 4, 5]);
    for o in [&missing, &config, &schema, &data] {
        let text = String::from_utf8_lossy(&o.stderr);
        assert_eq!(text.trim().lines().count(), 1, "{text}");
        let record: Value = serde_json::from_str(text.trim()).unwrap();
        assert!(record["error"].is_string() && record["message"].is_string());
    }
}

#[test]
fn stages_chain_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&with_small("simulate", out));
    ok(&with_small("train", out));
    ok(&with_small("calibrate", out));
    let mut plan = with_small("plan", out);
    plan.extend(["--strategy", "beam", "--beam-size", "3", "--horizon", "8"]);
    ok(&plan);
    let plans: Value = serde_json::from_slice(&std::fs::read(dir.path().join("plans.json")).unwrap()).unwrap();
    let first = &plans["data"][0];
    assert_eq!(first["path"].as_array().unwrap().len(), 8);
    assert_eq!(first["beam_size"], 3);

    let mut sweep = with_small("noise-sweep", out);
    sweep.extend(["--noise-max", "2"]);
    ok(&sweep);
    let csv = std::fs::read_to_string(dir.path().join("noise_curves.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().count(), 2 + 3 * 3);

    ok(&with_small("stats", out));
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    for name in ["sessions.jsonl", "holdout.jsonl", "models/quit_mil.calibrated.json", "stats.json"] {
        assert!(manifest["files"][name]["sha256"].is_string(), "{name} missing from manifest");
    }
    assert!(dir.path().join("config.resolved.toml").exists());
}

#[test]
fn evaluate_default_pipeline_reproduces_strategy_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for cmd in ["simulate", "train", "calibrate", "evaluate"] {
        ok(&[cmd, "--out", out, "--horizon", "20"]);
    }
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("eval_report.json")).unwrap()).unwrap();
    let rows = report["data"]["rows"].as_array().unwrap();
    let get = |strategy: &str, field: &str| {
        rows.iter()
            .find(|r| r["strategy"] == strategy && r["horizon"] == 20)
            .unwrap()[field]
            .as_f64()
            .unwrap()
    };
    assert_eq!(report["data"]["rows"][0]["users"], 500);
    assert!(get("ssp", "mean_ipv") > get("beam", "mean_ipv"));
    assert!(get("beam", "mean_ipv") > get("greedy", "mean_ipv"));
    assert!(get("greedy", "ctr") > get("ssp", "ctr"));
    let table = std::fs::read_to_string(dir.path().join("eval_report.txt")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("Method"));
}
