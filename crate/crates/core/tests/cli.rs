use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aisqa(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aisqa"))
        .arg("--work-dir")
        .arg(work)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join(aisqa::fixture::FIXTURE_CSV)
        .display()
        .to_string()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aisqa(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(aisqa(dir.path(), &["--help"]).status.code(), Some(0));
    // Later stage before its input exists.
    let out = aisqa(dir.path(), &["sample"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
    // Unreadable input is a data error.
    let out = aisqa(dir.path(), &["ingest", "--input", "/no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let out = aisqa(dir.path(), &["stats", "wilson", "5", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stats_and_cost() {
    let dir = tempfile::tempdir().unwrap();
    let z = json(&aisqa(dir.path(), &["stats", "ztest", "75", "100", "354", "500"]));
    assert!((z["z"].as_f64().unwrap() - 0.849).abs() < 1e-3);
    let w = json(&aisqa(dir.path(), &["stats", "wilson", "75", "100"]));
    assert!((w["low"].as_f64().unwrap() - 0.657).abs() < 1e-3);
    let c = json(&aisqa(dir.path(), &["cost", "--compare", "2190000", "8400"]));
    assert_eq!(c["ratio_rounded"].as_f64(), Some(261.0));
    let table = json(&aisqa(dir.path(), &["cost"]));
    assert_eq!(table.as_array().unwrap().len(), 2);
}

#[test]
fn stage_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let ing = json(&aisqa(w, &["ingest", "--input", &fixture()]));
    assert_eq!(ing["accepted"].as_u64(), Some(5200));
    let s = json(&aisqa(w, &["sample"]));
    assert_eq!(s["contexts"].as_u64(), Some(4));

    let ctx = w.join("contexts/context_00000.json");
    let planned = json(&aisqa(w, &["oracle", "--context", ctx.to_str().unwrap()]));
    assert_eq!(planned.as_array().unwrap().len(), 12);
    let count = json(&aisqa(
        w,
        &["oracle", "--context", ctx.to_str().unwrap(), "--query", r#"{"kind":"count","filter":{}}"#],
    ));
    assert!(count["narrative"].as_str().unwrap().contains("260"));

    let g = json(&aisqa(w, &["generate", "--client", "mock", "--concurrency", "2"]));
    assert_eq!(g["pairs_generated"].as_u64(), Some(48));
    json(&aisqa(w, &["respond", "--client", "mock-perturbed"]));
    let e = json(&aisqa(w, &["evaluate"]));
    assert_eq!(e["overall"]["accuracy"].as_f64(), Some(0.0));
    json(&aisqa(w, &["respond", "--client", "mock"]));
    let e = json(&aisqa(w, &["evaluate"]));
    assert_eq!(e["overall"]["accuracy"].as_f64(), Some(1.0));

    let val = w.join("dataset/validation.jsonl");
    let resp = w.join("responses.jsonl");
    let m = json(&aisqa(
        w,
        &["metrics", "--candidates", resp.to_str().unwrap(), "--references", val.to_str().unwrap()],
    ));
    assert!((m["bleu"]["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let files = json(&aisqa(w, &["report"]));
    assert!(files.as_array().unwrap().len() >= 3);
}

#[test]
fn train_config_emit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train.json");
    json(&aisqa(dir.path(), &["train-config", "emit", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(&out).unwrap();
    let parsed = aisqa::train::parse_training_config(&text).unwrap();
    assert_eq!(parsed.scaled_frequencies.len(), 64);
}
