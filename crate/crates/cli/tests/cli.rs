use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gsaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsaf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_SPEC: &[&str] = &[
    "--set", "num_domains=3",
    "--set", "videos_per_domain=20",
    "--set", "n=6",
    "--set", "d_face=3",
    "--set", "d_bg=2",
    "--set", "d_audio=3",
    "--set", "vocab_size=16",
    "--set", "min_words=4",
    "--set", "max_words=8",
];

fn generate_tiny(dir: &Path) -> PathBuf {
    let out = dir.join("data.jsonl");
    let mut args = vec!["generate", "--out", path(&out)];
    args.extend_from_slice(TINY_SPEC);
    let o = gsaf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn write_config(dir: &Path, extra: Value) -> PathBuf {
    let mut cfg = serde_json::json!({
        "dataset": "data.jsonl",
        "out_dir": "run",
        "model": {
            "d_face": 3, "d_bg": 2, "d_audio": 3, "vocab_size": 16,
            "d_text": 3, "h": 2, "d_k": 2, "d_z": 2, "mlp_hidden": 4, "n": 6
        },
        "adapt": { "shots": 4, "iterations": 3, "batch_size": 4, "eval_every": 1 },
        "targets": [0]
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

#[test]
fn generate_is_deterministic_and_set_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate_tiny(dir.path());
    let first = fs::read(&a).unwrap();
    let b = generate_tiny(dir.path());
    assert_eq!(first, fs::read(b).unwrap());
    let header: Value =
        serde_json::from_str(String::from_utf8_lossy(&first).lines().next().unwrap()).unwrap();
    assert_eq!(header["n"], 6);
    assert_eq!(header["vocab_size"], 16);
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 61);
}

#[test]
fn cluster_reports_assignments_and_relabels() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_tiny(dir.path());
    let out = dir.path().join("clustered.jsonl");
    let o = gsaf(&["cluster", "--in", path(&data), "--k", "3", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["assignments"].as_array().unwrap().len(), 60);
    let sizes: u64 = summary["sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(sizes, 60);
    assert!(out.is_file());
}

#[test]
fn train_eval_and_simmatrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_tiny(dir.path());
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let o = gsaf(&["train-adapt", "--config", path(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let agg: Value = serde_json::from_slice(&o.stdout).unwrap();
    let acc = agg["mean"]["average_accuracy"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&acc));

    let run = dir.path().join("run");
    let target = run.join("target_0");
    for f in ["meta.json", "report.json", "history_seed0.csv", "model_seed0.gsaf", "split_seed0.json"] {
        assert!(target.join(f).is_file(), "missing {f}");
    }
    let history = fs::read_to_string(target.join("history_seed0.csv")).unwrap();
    assert!(history.starts_with("iter,lr,target_loss,val_loss,s_1,s_2"));

    let o = gsaf(&[
        "eval",
        "--model", path(&target.join("model_seed0.gsaf")),
        "--data", path(&data),
        "--split", path(&target.join("split_seed0.json")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["accuracy"].as_array().unwrap().len(), 5);

    let matrix = dir.path().join("sim.csv");
    let o = gsaf(&["simmatrix", "--history", path(&run), "--out", path(&matrix)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&matrix).unwrap();
    assert_eq!(text.lines().next().unwrap(), "target,d0,d1,d2");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn finetune_runs_with_ablation_flags() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let o = gsaf(&["train-finetune", "--config", path(&cfg), "--no-adaptive-lr", "--drop", "audio"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let agg: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(agg["method"], "finetune");
}

#[test]
fn gradcheck_small_run_passes() {
    let o = gsaf(&["gradcheck", "--trials", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["trials"], 2);
    assert!(report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let o = gsaf(&["train-adapt", "--config", path(&cfg), "--set", "adapt.shots=0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gsaf(&["train-adapt", "--config", path(&cfg), "--set", "adapt.no_such_field=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gsaf(&["train-adapt", "--config", path(&cfg), "--set", "model.h=0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    generate_tiny(dir.path());
    let cfg = write_config(dir.path(), serde_json::json!({}));
    let o = gsaf(&[
        "train-adapt", "--config", path(&cfg),
        "--set", "adapt.optimizer=sgd",
        "--set", "adapt.alpha=1e300",
        "--set", "adapt.inner_lr=1e300",
        "--no-adaptive-lr",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_input_exits_with_1() {
    let o = gsaf(&["cluster", "--in", "/nonexistent/data.jsonl", "--k", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
