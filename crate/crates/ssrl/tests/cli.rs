use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ssrl");

const SMALL_RUN: &str = "\
seed = 11
dim = 16
budget = 1
max_epochs = 5
resamples = 50
codes = [\"OFF_TOPIC\", \"REFLECTING\"]
configs = [\"text_only\", \"log_only\"]

[synth]
n_sessions = 9
target_segments = 120
";

fn ssrl(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the config and synthesizes data; returns (config path, data dir).
fn small_dataset(root: &Path) -> (PathBuf, PathBuf) {
    let config = root.join("run.toml");
    fs::write(&config, SMALL_RUN).unwrap();
    let data = root.join("data");
    let out = ssrl(&["synth", "--config", s(&config), "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (config, data)
}

#[test]
fn synth_output_validates_with_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let out = ssrl(&["validate", "--config", s(&config), "--data", s(&data), "--out", s(&dir.path().join("v"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("v/validation_report.txt")).unwrap();
    assert!(report.trim_end().ends_with("0 error(s), 0 warning(s)"), "{report}");
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let again = dir.path().join("again");
    assert!(ssrl(&["synth", "--config", s(&config), "--out", s(&again)]).status.success());
    for f in ["transcripts.jsonl", "actions.jsonl", "labels.jsonl", "context_map.json"] {
        assert_eq!(fs::read(data.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evaluate_writes_manifest_first_and_report_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let out_dir = dir.path().join("eval");
    let out = ssrl(&["evaluate", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let modified = |f: &str| fs::metadata(out_dir.join(f)).unwrap().modified().unwrap();
    assert!(modified("evaluation_manifest.json") <= modified("report.csv"));
    assert!(modified("evaluation_manifest.json") <= modified("report.txt"));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("evaluation_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["fold_plan"]["outer"].as_array().unwrap().len(), 3);
    for cell in manifest["cells"].as_array().unwrap() {
        assert_eq!(cell["leakage_violations"].as_array().unwrap().len(), 0);
    }

    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("code,text_only,text_with_context,log_only,log_and_text,log_and_text_context\n"));
    assert!(csv.contains("n/a(not_run)"));

    let text_before = fs::read(out_dir.join("report.txt")).unwrap();
    fs::remove_file(out_dir.join("report.txt")).unwrap();
    let rendered = ssrl(&["report", "--out", s(&out_dir)]);
    assert!(rendered.status.success());
    assert_eq!(fs::read(out_dir.join("report.txt")).unwrap(), text_before);
    assert_eq!(rendered.stdout, text_before);
}

#[test]
fn segment_and_featurize_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let out_dir = dir.path().join("f");
    assert!(ssrl(&["segment", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]).status.success());
    let segments = fs::read_to_string(out_dir.join("segments.jsonl")).unwrap();
    let labels = fs::read_to_string(data.join("labels.jsonl")).unwrap();
    assert_eq!(segments.lines().count(), labels.lines().count());

    let out = ssrl(&["featurize", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("features_text_only.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 2 + 16);
    assert_eq!(text.lines().count(), 1 + segments.lines().count());
    assert!(fs::read_to_string(out_dir.join("features_log_only.csv")).unwrap().contains("log:"));

    // the exported embeddings drive the file embedder to the same matrices
    let again = dir.path().join("g");
    let emb = out_dir.join("embeddings.jsonl");
    fs::copy(&emb, data.join("embeddings.jsonl")).unwrap();
    let out = ssrl(&["featurize", "--config", s(&config), "--data", s(&data), "--embedder", "file", "--out", s(&again)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(out_dir.join("features_text_only.csv")).unwrap(),
        fs::read_to_string(again.join("features_text_only.csv")).unwrap()
    );
}

#[test]
fn mock_summaries_are_deterministic_and_keyed() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = ssrl(&["summarize", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(out_dir.join("summaries.jsonl")).unwrap()
    };
    let first = run("a");
    assert_eq!(first, run("b"));
    let lines: Vec<serde_json::Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 120);
    assert!(lines.iter().all(|l| !l["summary"].as_str().unwrap().is_empty() && l["provider"] == "mock"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssrl(&["synth", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");
    assert_eq!(err["command"], "synth");
}

#[test]
fn bad_flag_value_is_a_config_error() {
    let out = ssrl(&["evaluate", "--configs", "text_only,nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (config, data) = small_dataset(dir.path());
    let mut actions = fs::read_to_string(data.join("actions.jsonl")).unwrap();
    actions.push_str("{\"session_id\":\"S001\",\"t\":5,\"block_id\":\"b\",\"raw_action\":\"drag\",\"connected\":true}\n");
    fs::write(data.join("actions.jsonl"), &actions).unwrap();
    let out_dir = dir.path().join("v");
    let out = ssrl(&["validate", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    let report = fs::read_to_string(out_dir.join("validation_report.txt")).unwrap();
    let line = actions.lines().count();
    assert!(report.contains(&format!("error actions line {line}:")), "{report}");
    let out = ssrl(&["evaluate", "--config", s(&config), "--data", s(&data), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn too_few_sessions_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, SMALL_RUN.replace("n_sessions = 9\ntarget_segments = 120", "n_sessions = 2\ntarget_segments = 40")).unwrap();
    let data = dir.path().join("data");
    assert!(ssrl(&["synth", "--config", s(&config), "--out", s(&data)]).status.success());
    let out = ssrl(&["evaluate", "--config", s(&config), "--data", s(&data), "--out", s(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
