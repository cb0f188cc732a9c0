//! End-to-end checks of the command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pinchwpt::ddpg::{read_train_log, Agent};
use pinchwpt::experiment::{read_eval_csv, read_sweep_csv};
use pinchwpt::ExperimentConfig;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pinchwpt"))
}

fn tiny_config(users: usize, pas: usize) -> Value {
    json!({
        "system": {"num_users": users, "num_pas": pas, "episode_length": 4},
        "agent": {"hidden_widths": [16, 16], "batch_size": 8},
        "benchmark": {"eval_episodes": 2, "oracle_beta_points": 3, "oracle_power_points": 3, "oracle_position_points": 4},
        "run": {"episodes": 3, "experiment_id": "cli"}
    })
}

fn write_config(dir: &Path, doc: &Value) -> PathBuf {
    let path = dir.join("config.in.json");
    fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_then_eval_then_oracle_check_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(2, 1));
    let out = tmp.path().join("out");
    let o = run(&["train", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.join("cli");
    let log = read_train_log(&dir.join("train_log.csv")).unwrap();
    assert_eq!(log.len(), 3);
    let agent = Agent::load(&dir.join("checkpoint.json")).unwrap();
    assert_eq!(agent.action_dim, 2 + 1 + 1);
    let written = ExperimentConfig::from_path(dir.join("config.json")).unwrap();
    assert_eq!(written.system.num_users, 2);
    let policies: Vec<String> = read_eval_csv(&dir.join("eval.csv")).unwrap().into_iter().map(|r| r.policy).collect();
    assert_eq!(policies, ["drl", "fixed", "discrete", "continuous_constrained"]);

    let ckpt = dir.join("checkpoint.json");
    let o = run(&["eval", "--config", s(&cfg), "--policy", "discrete", "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["policy"], "discrete");
    assert!(stats["mean_ee"].as_f64().unwrap() >= 0.0);

    let o = run(&["oracle-check", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("oracle.csv").exists());
}

#[test]
fn sweep_writes_every_policy_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = tiny_config(2, 1);
    doc["run"]["episodes"] = json!(2);
    let cfg = write_config(tmp.path(), &doc);
    let out = tmp.path().join("out");
    let o = run(&["sweep", "--config", s(&cfg), "--axis", "pas", "--values", "1,2", "--seeds", "0,1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_sweep_csv(&out.join("cli").join("sweep_pas.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 5);
    for v in [1, 2] {
        let names: Vec<&str> = rows.iter().filter(|r| r.axis_value == v).map(|r| r.policy.as_str()).collect();
        assert_eq!(names, ["drl", "fixed", "discrete", "continuous_constrained", "oma"]);
    }
}

#[test]
fn config_errors_exit_with_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doc = tiny_config(2, 1);
    doc["agent"]["discount"] = json!(1.5);
    let cfg = write_config(tmp.path(), &doc);
    let o = run(&["train", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("agent.discount"));

    let mut doc = tiny_config(2, 1);
    doc["system"]["bogus_key"] = json!(1);
    let cfg = write_config(tmp.path(), &doc);
    let o = run(&["train", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_key"));

    let cfg = write_config(tmp.path(), &tiny_config(2, 1));
    let o = run(&["eval", "--config", s(&cfg), "--policy", "greedy", "--checkpoint", "x.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_failures_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &tiny_config(2, 1));
    let missing = tmp.path().join("missing.json");
    let o = run(&["eval", "--config", s(&cfg), "--policy", "drl", "--checkpoint", s(&missing)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    // The oracle refuses scenarios too large to enumerate.
    let big = write_config(tmp.path(), &tiny_config(3, 3));
    let out = tmp.path().join("out");
    let o = run(&["train", "--config", s(&big), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let ckpt = out.join("cli").join("checkpoint.json");
    let o = run(&["oracle-check", "--config", s(&big), "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn checkpoint_from_another_scenario_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let small = write_config(tmp.path(), &tiny_config(2, 1));
    let out = tmp.path().join("out");
    assert_eq!(code(&run(&["train", "--config", s(&small), "--out", s(&out)])), 0);
    let ckpt = out.join("cli").join("checkpoint.json");
    let other = tmp.path().join("other.json");
    fs::write(&other, serde_json::to_string(&tiny_config(3, 2)).unwrap()).unwrap();
    let o = run(&["eval", "--config", s(&other), "--policy", "drl", "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 1);
}
