//! The `eegcn` binary: exit codes, run directories and command outputs.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 9] = [
    "synth_train=40",
    "synth_dev=10",
    "synth_test=10",
    "word_dim=6",
    "entity_dim=3",
    "edge_dim=4",
    "lstm_hidden=4",
    "gcn_hidden=5",
    "max_epochs=2",
];

fn eegcn(cwd: &Path, args: &[&str], extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_eegcn"));
    cmd.current_dir(cwd).args(args);
    for kv in SMALL.iter().chain(extra) {
        cmd.args(["--set", kv]);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn train_writes_run_directory_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = eegcn(d, &["train", "--seed", "3", "--run-dir", "a"], &[]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let stdout = String::from_utf8_lossy(&a.stdout);
    assert!(stdout.contains("dev P") && stdout.contains("F1"));
    for f in ["config.txt", "metrics.jsonl", "model.ckpt", "summary.json"] {
        assert!(d.join("a").join(f).exists(), "{f}");
    }
    let b = eegcn(d, &["train", "--seed", "3", "--run-dir", "b"], &["alpha=5"]);
    assert_eq!(code(&b), 0);
    for f in ["metrics.jsonl", "model.ckpt"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
    let again = eegcn(d, &["train", "--seed", "3", "--run-dir", "a"], &[]);
    assert_eq!(code(&again), 2);
}

#[test]
fn default_run_directory_name() {
    let dir = tempfile::tempdir().unwrap();
    let o = eegcn(dir.path(), &["gen-synthetic", "--seed", "9", "--out", "runs"], &[]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> = std::fs::read_dir(dir.path().join("runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 1);
    assert!(names[0].starts_with("run-") && names[0].ends_with("-seed9"), "{}", names[0]);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&eegcn(d, &["train"], &["alhpa=5"])), 2);
    assert_eq!(code(&eegcn(d, &["train"], &["train_path=missing.jsonl", "dev_path=missing.jsonl"])), 2);
    assert_eq!(code(&eegcn(d, &["train"], &["train_path=missing.jsonl"])), 2);
    assert_eq!(code(&eegcn(d, &["sweep", "--axis", "lr"], &[])), 2);
    assert_eq!(code(&eegcn(d, &["ablate", "--switches", "attention"], &[])), 2);
    assert_eq!(code(&eegcn(d, &["count-params", "--relations", "-1"], &[])), 2);
    assert_eq!(code(&eegcn(d, &["frobnicate"], &[])), 2);
    std::fs::write(d.join("bad.cfg"), "layers = 2\nnot a pair\n").unwrap();
    assert_eq!(code(&eegcn(d, &["train", "--config", "bad.cfg"], &[])), 2);
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t.jsonl"), "{broken\n").unwrap();
    let o = eegcn(d, &["train", "--run-dir", "r"], &["train_path=t.jsonl", "dev_path=t.jsonl"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t.jsonl:1"));
    let o = eegcn(d, &["eval", "--checkpoint", "nope.ckpt", "--input", "t.jsonl"], &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "# small run\nlayers = 1\nmax_epochs = 1\n").unwrap();
    let o = eegcn(d, &["train", "--config", "run.cfg", "--run-dir", "r"], &["max_epochs=1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = std::fs::read_to_string(d.join("r/config.txt")).unwrap();
    assert!(cfg.contains("layers = 1"));
}

#[test]
fn evaluate_predict_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&eegcn(d, &["train", "--run-dir", "t"], &[])), 0);
    assert_eq!(code(&eegcn(d, &["gen-synthetic", "--run-dir", "g"], &[])), 0);
    let ck = "t/model.ckpt";

    let o = eegcn(d, &["eval", "--checkpoint", ck, "--input", "g/test.jsonl"], &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("classification P"));

    let o = eegcn(d, &["predict", "--checkpoint", ck, "--input", "g/test.jsonl"], &[]);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l["triggers"].is_array()));

    let o = eegcn(d, &["inspect", "--checkpoint", ck, "--input", "g/test.jsonl", "--run-dir", "i"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first: Vec<String> = std::fs::read_to_string(d.join("g/test.jsonl")).unwrap().lines().map(String::from).collect();
    let rec: serde_json::Value = serde_json::from_str(&first[0]).unwrap();
    let n = rec["tokens"].as_array().unwrap().len();
    let csv = std::fs::read_to_string(d.join("i/relevance-0.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), n + 1);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == n));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("i/relevance.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 10);
    let o = eegcn(d, &["inspect", "--checkpoint", ck, "--input", "g/test.jsonl", "--layer", "9", "--run-dir", "j"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn count_params_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = eegcn(dir.path(), &["count-params"], &[]);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("eegcn  2000") && out.contains("rgcn   900000") && out.contains("gcn    0"), "{out}");
}
