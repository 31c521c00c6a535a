use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn warmline(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warmline"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("spawn warmline")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = warmline(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

fn synth(dir: &Path) {
    ok(
        dir,
        &["synth", "--seed", "5", "--out", "s", "--pairs", "60", "--per-task", "40", "--reference", "8"],
    );
}

#[test]
fn train_severe_reports_each_fold() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    ok(
        tmp.path(),
        &["train", "severe", "--data", "s/labels", "--folds", "3", "--trees", "20", "--out", "t"],
    );
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("t/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["severe"]["folds"].as_array().unwrap().len(), 3);
    assert!(tmp.path().join("t/bundle/manifest.json").exists());
    let csv = std::fs::read_to_string(tmp.path().join("t/confusion.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("severe,"));
}

#[test]
fn train_without_severe_writes_standalone_heads() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    ok(
        tmp.path(),
        &["train", "state:anxiety", "--data", "s/labels", "--trees", "10", "--out", "t"],
    );
    assert!(tmp.path().join("t/heads/state-anxiety.json").exists());
    assert!(!tmp.path().join("t/bundle").exists());
}

#[test]
fn eval_writes_one_row_per_engine() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let table = ok(
        tmp.path(),
        &["eval", "--engines", "baseline,rule", "--refset", "s/refset.json", "--out", "e"],
    );
    assert!(table.contains("baseline") && table.contains("rule_based"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("e/report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|r| r["kind"] == "engine").count(), 2);
    let csv = std::fs::read_to_string(tmp.path().join("e/pairs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
}

#[test]
fn chat_escalates_severe_messages() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        tmp.path(),
        &["chat", "--engine", "rule", "--text", "I have thoughts of ending my life"],
    );
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["state"], "escalated");
    assert_eq!(v["safety"], "escalated");
    assert_eq!(v["flagged"], true);
    for s in v["reply"]["sentences"].as_array().unwrap() {
        assert_eq!(s["kind"], "escalation");
    }
}

#[test]
fn errors_are_json_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let out = warmline(tmp.path(), &["chat", "--engine", "oracle", "--text", "hello"]);
    assert!(!out.status.success());
    let v = stderr_json(&out);
    assert!(v["error"].as_str().unwrap().contains("oracle"));
    assert!(v["detail"].is_array());
}

#[test]
fn stage2_without_base_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let out = warmline(
        tmp.path(),
        &["finetune", "--stage", "stage2", "--filtered", "s/corpus.jsonl", "--out", "f"],
    );
    assert!(!out.status.success());
    let v = stderr_json(&out);
    assert!(v.to_string().contains("stage-1"), "{v}");
    assert!(!tmp.path().join("f/stage2").exists());
}

#[test]
fn finetune_both_then_chat_generative() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let out = ok(
        tmp.path(),
        &["finetune", "--stage", "both", "--corpus", "s/corpus.jsonl", "--epochs", "1", "--out", "f"],
    );
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["stage2"]["base_checkpoint_hash"], v["stage1"]["model_hash"]);
    let reply = ok(
        tmp.path(),
        &["chat", "--engine", "generative", "--checkpoint", "f/stage2", "--text", "The nights are so long"],
    );
    let r: Value = serde_json::from_str(reply.trim()).unwrap();
    assert_eq!(r["state"], "open");
    assert!(!r["text"].as_str().unwrap().contains("<|"));
}

#[test]
fn prep_reports_rejects_and_retention() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let mut raw = std::fs::read_to_string(tmp.path().join("s/corpus.jsonl")).unwrap();
    raw.push_str("{not json\n");
    std::fs::write(tmp.path().join("raw.jsonl"), raw).unwrap();
    ok(
        tmp.path(),
        &["prep", "--corpus", "raw.jsonl", "--min-turns", "2", "--min-words", "5", "--out", "p"],
    );
    let stats: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("p/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["rejected_records"], 1);
    assert_eq!(stats["parsed"]["conversations"], 60);
    let r = stats["retention_ratio"].as_f64().unwrap();
    assert!(r > 0.0 && r <= 1.0);
    assert!(!std::fs::read_to_string(tmp.path().join("p/rejects.txt")).unwrap().is_empty());
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    std::fs::write(tmp.path().join("run.toml"), "[train]\nfolds = 5\ntrees = 10\n").unwrap();
    ok(
        tmp.path(),
        &["--config", "run.toml", "train", "severe", "--data", "s/labels", "--folds", "2", "--out", "t"],
    );
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("t/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["severe"]["folds"].as_array().unwrap().len(), 2);

    std::fs::write(tmp.path().join("bad.toml"), "[train]\nfold = 5\n").unwrap();
    let out = warmline(tmp.path(), &["--config", "bad.toml", "chat", "--engine", "rule", "--text", "hi"]);
    assert!(!out.status.success());
}
