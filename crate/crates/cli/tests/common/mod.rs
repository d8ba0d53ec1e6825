//! Drives the `convoarg` binary through every subcommand in a scratch directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

pub fn convoarg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_convoarg"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn convoarg_ok(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = convoarg(dir, args);
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`convoarg {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

const SYNTH: &str = r#"{"n_conversations": 6, "posts_per_conversation": [40, 80], "n_users": 200, "seed": 11}"#;

const RUN: &str = r#"{
  "synth": {"n_conversations": 6, "posts_per_conversation": [40, 80], "n_users": 200, "seed": 12},
  "kind": "random_forest",
  "hyperparams": {"forest_trees": 20},
  "seed": 5,
  "out_dir": "run"
}"#;

/// Every subcommand, in pipeline order, with fixed seeds.
pub const STEPS: &[&[&str]] = &[
    &["synth", "--config", "synth.json", "--out", "raw.jsonl", "--truth", "truth.json"],
    &["ingest", "--in", "raw.jsonl", "--out", "posts.jsonl"],
    &["graph", "--in", "posts.jsonl", "--out", "graphs.jsonl"],
    &["centrality", "--in", "graphs.jsonl", "--out", "centrality.csv"],
    &["features", "--graphs", "graphs.jsonl", "--centrality", "centrality.csv", "--out", "features.csv"],
    &["features", "--in", "posts.jsonl", "--out", "features_direct.csv"],
    &["label", "--posts", "posts.jsonl", "--features", "features.csv", "--out", "labels.csv", "--approvals", "approvals.csv"],
    &["balance", "--in", "labels.csv", "--seed", "7", "--out", "balanced.csv"],
    &["train", "--kind", "rf", "--features", "minimal", "--seed", "7", "--trees", "20", "--in", "balanced.csv", "--out", "model.json"],
    &["eval", "--model", "model.json", "--in", "labels.csv", "--report", "eval.json", "--csv", "eval.csv"],
    &["cv", "--kind", "nb", "--in", "balanced.csv", "--k", "5", "--report", "cv.json", "--csv", "cv.csv"],
    &["analyze", "pca", "--in", "balanced.csv", "--report", "pca.json", "--csv", "pca.csv"],
    &["analyze", "rfe", "--in", "balanced.csv", "--trees", "10", "--k", "3", "--seed", "2", "--report", "rfe.json", "--csv", "rfe.csv"],
    &["analyze", "ablation", "--in", "balanced.csv", "--trees", "10", "--k", "3", "--seed", "2", "--report", "ablation.json", "--csv", "ablation.csv"],
    &["detect", "--model", "model.json", "--in", "posts.jsonl", "--out", "detect.csv", "--fraction", "0.05", "--report", "detect.json"],
    &["run", "--config", "run.json"],
];

pub fn write_configs(dir: &Path) {
    fs::write(dir.join("synth.json"), SYNTH).unwrap();
    fs::write(dir.join("run.json"), RUN).unwrap();
}

pub fn workflow(dir: &Path) -> Result<(), String> {
    write_configs(dir);
    for step in STEPS {
        convoarg_ok(dir, step)?;
    }
    Ok(())
}

/// Relative path to contents, for every file under `dir`.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, at: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(at).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Runs the workflow twice in the same place and lists files that differ.
pub fn rerun_differences(dir: &Path) -> Result<Vec<String>, String> {
    workflow(dir)?;
    let first = snapshot(dir);
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            fs::remove_dir_all(path).unwrap();
        } else {
            fs::remove_file(path).unwrap();
        }
    }
    workflow(dir)?;
    let second = snapshot(dir);
    let mut diffs: Vec<String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    diffs.extend(second.keys().filter(|k| !first.contains_key(*k)).cloned());
    Ok(diffs)
}
