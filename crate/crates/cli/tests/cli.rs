mod common;

use std::fs;

use common::{convoarg, rerun_differences, workflow};

#[test]
fn every_command_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let diffs = rerun_differences(dir.path()).unwrap();
    assert!(diffs.is_empty(), "changed on rerun: {diffs:?}");
    assert_eq!(
        fs::read(dir.path().join("features.csv")).unwrap(),
        fs::read(dir.path().join("features_direct.csv")).unwrap()
    );
    for f in ["run/manifest.json", "run/report.json", "model.json", "ablation.csv", "detect.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn manifest_lists_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    workflow(dir.path()).unwrap();
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("run/manifest.json")).unwrap()).unwrap();
    let stages = manifest["stages"].as_array().unwrap();
    assert!(!stages.is_empty());
    for stage in stages {
        for out in stage["outputs"].as_array().unwrap() {
            assert_eq!(out["sha256"].as_str().unwrap().len(), 64);
        }
    }
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = convoarg(dir.path(), &["ingest", "--in", "missing.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));

    let line = |id: &str, parent: Option<&str>| {
        serde_json::json!({"id": id, "conversation_id": "c", "author": "a", "parent_id": parent, "body": "", "timestamp": 0, "score": 1})
            .to_string()
    };
    fs::write(dir.path().join("bad.jsonl"), format!("{}\n{}\n", line("p1", None), line("p2", Some("nope")))).unwrap();
    let out = convoarg(dir.path(), &["ingest", "--in", "bad.jsonl", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.jsonl").exists());

    fs::write(dir.path().join("run.json"), r#"{"out_dir": "o", "fraction": 2.0, "inputs": ["bad.jsonl"]}"#).unwrap();
    let out = convoarg(dir.path(), &["run", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn stage_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // one class only: balancing cannot succeed
    let header = "conversation_id,user_id,PC,CC,Att_IN,Att_OUT,Def_IN,Def_OUT,AvgAtt_IN,AvgAtt_OUT,AvgDef_IN,AvgDef_OUT,Agr,Dis,En,NEn,As,NAs,CBC,CEC,CClC,is_top";
    let rows: String = (0..4).map(|i| format!("c,u{i}{}\n", ",1".repeat(19) + ",0")).collect();
    fs::write(dir.path().join("labels.csv"), format!("{header}\n{rows}")).unwrap();
    let out = convoarg(dir.path(), &["cv", "--kind", "nb", "--in", "labels.csv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
