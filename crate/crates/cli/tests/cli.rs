use std::path::Path;
use std::process::{Command, Output};

fn divrank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divrank"))
        .current_dir(dir)
        .env_remove("DIVRANK_CONFIG")
        .args(args)
        .output()
        .expect("spawn divrank")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = divrank(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path) {
    ok(dir, &["synth", "--out-dir", "d", "--queries", "12", "--seed", "5"]);
}

fn mean_row(tsv: &str) -> Vec<String> {
    let line = tsv.lines().find(|l| l.starts_with("mean")).expect("mean row");
    line.split('\t').skip(1).map(str::to_string).collect()
}

#[test]
fn targets_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    ok(d, &["build-targets", "--dataset", "d/train.jsonl", "--out", "t.run", "--ideal-out", "ideal.tsv"]);
    ok(d, &["evaluate", "--dataset", "d/train.jsonl", "--run", "t.run", "--out", "eval.tsv"]);
    let tsv = std::fs::read_to_string(d.join("eval.tsv")).unwrap();
    let header: Vec<&str> = tsv.lines().next().unwrap().split('\t').collect();
    let means = mean_row(&tsv);
    for (name, v) in header[1..4].iter().zip(&means) {
        assert_eq!(v, "1.000000", "{name}");
    }
    assert!(std::fs::read_to_string(d.join("ideal.tsv")).unwrap().contains("ideal_raw_err-ia"));
}

#[test]
fn train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let summary = ok(d, &["train", "--dataset", "d/train.jsonl", "--out", "m.json", "--c", "10", "--log", "log.jsonl"]);
    assert!(!summary.is_empty());
    assert!(d.join("log.jsonl").exists());
    ok(d, &["predict", "--dataset", "d/test.jsonl", "--model", "m.json", "--out", "p.run"]);
    let run = std::fs::read_to_string(d.join("p.run")).unwrap();
    let first: Vec<&str> = run.lines().next().unwrap().split(' ').collect();
    assert_eq!(first.len(), 4);
    assert_eq!(first[1], "1");
    ok(d, &["evaluate", "--dataset", "d/test.jsonl", "--run", "p.run", "--out", "e.tsv"]);
    ok(d, &["baseline", "--method", "relevance", "--dataset", "d/test.jsonl", "--out", "r.run"]);
    ok(d, &["evaluate", "--dataset", "d/test.jsonl", "--run", "r.run", "--out", "r.tsv"]);
    let learned: f64 = mean_row(&std::fs::read_to_string(d.join("e.tsv")).unwrap())[1].parse().unwrap();
    let relevance: f64 = mean_row(&std::fs::read_to_string(d.join("r.tsv")).unwrap())[1].parse().unwrap();
    assert!(learned > relevance, "{learned} vs {relevance}");
}

#[test]
fn incompatible_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    ok(d, &["train", "--dataset", "d/train.jsonl", "--out", "m.json", "--c", "1"]);
    ok(d, &["synth", "--out-dir", "raw", "--queries", "4", "--raw-fields", "--seed", "5"]);
    ok(d, &["feature-extract", "--dataset", "raw/test.jsonl", "--out", "f.jsonl", "--topics", "3", "--channels", "text"]);
    let out = divrank(d, &["predict", "--dataset", "f.jsonl", "--model", "m.json", "--out", "p.run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("divrank: error[compatibility]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!d.join("p.run").exists());
}

#[test]
fn failures_leave_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    // a run naming a query absent from the dataset
    std::fs::write(d.join("bad.run"), "nope 1 x 0.5\n").unwrap();
    let out = divrank(d, &["evaluate", "--dataset", "d/test.jsonl", "--run", "bad.run", "--out", "e.tsv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("e.tsv").exists());
    let leftovers: Vec<_> = std::fs::read_dir(d)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn malformed_dataset_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let text = std::fs::read_to_string(d.join("d/test.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[1] = lines[1].replacen("\"features\":[[", "\"features\":[[\"x\",", 1);
    std::fs::write(d.join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = divrank(d, &["baseline", "--method", "relevance", "--dataset", "bad.jsonl", "--out", "r.run"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bad.jsonl:2") && err.contains("features[0][0]"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = divrank(dir.path(), &["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("divrank: error[usage]:"));
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    std::fs::write(d.join("divrank.toml"), "measure = \"nrbp\"\n").unwrap();
    ok(d, &["build-targets", "--dataset", "d/train.jsonl", "--out", "t.run", "--ideal-out", "ideal.tsv"]);
    assert!(std::fs::read_to_string(d.join("ideal.tsv")).unwrap().contains("ideal_raw_nrbp"));
    std::fs::write(d.join("divrank.toml"), "nonsense = 1\n").unwrap();
    let out = divrank(d, &["build-targets", "--dataset", "d/train.jsonl", "--out", "t2.run"]);
    assert_eq!(out.status.code(), Some(1));
}
