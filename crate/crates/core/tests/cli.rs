use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slu_mix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slu-mix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_two() {
    let out = slu_mix(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(slu_mix(&["plan", "--scheme", "sideways"]).status.code(), Some(2));
    assert_eq!(slu_mix(&["--help"]).status.code(), Some(0));
}

#[test]
fn evaluate_on_empty_predictions_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("empty.jsonl");
    fs::write(&preds, "").unwrap();
    let out = slu_mix(&["evaluate", "--pred", p(&preds)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty record list"));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slu_mix(&[
        "--json", "plan", "--corpus", "/nonexistent.jsonl", "--scheme", "direct", "--out",
        p(&dir.path().join("plan.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let line = String::from_utf8_lossy(&out.stderr);
    let v: serde_json::Value = serde_json::from_str(line.lines().last().unwrap()).unwrap();
    assert_eq!(v["event"], "error");
}

#[test]
fn single_run_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("c.jsonl");
    let ok = |args: &[&str]| {
        let out = slu_mix(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["synth", "--n", "300", "--lang", "en", "--seed", "3", "--out", p(&corpus)]);
    ok(&["ingest", "--in", p(&corpus), "--out", p(&d.join("c2.jsonl"))]);
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(d.join("c2.jsonl")).unwrap());
    ok(&[
        "plan", "--corpus", p(&corpus), "--scheme", "curriculum", "--p", "0.1", "--seed", "3", "--out",
        p(&d.join("plan.json")),
    ]);
    ok(&[
        "train", "--corpus", p(&corpus), "--plan", p(&d.join("plan.json")), "--hash-dim", "4096", "--out",
        p(&d.join("model.json")),
    ]);
    ok(&[
        "predict", "--corpus", p(&corpus), "--model", p(&d.join("model.json")), "--out",
        p(&d.join("preds.jsonl")),
    ]);
    ok(&[
        "evaluate", "--pred", p(&d.join("preds.jsonl")), "--gold", p(&corpus), "--out",
        p(&d.join("report.json")),
    ]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert!(report["slu_f1"].as_f64().unwrap() > 0.3);
    assert_eq!(report["counts"]["n_utts"], 45);

    ok(&[
        "export-manifest", "--plan", p(&d.join("plan.json")), "--corpus-ref", "c.jsonl", "--out",
        p(&d.join("manifest.json")),
    ]);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["manifest_version"], 1);
    assert_eq!(m["lr_phases"][0]["peak_lr"], 5.0e-6);
    assert_eq!(m["lr_phases"][1]["peak_lr"], 3.0e-6);
    assert_eq!(m["lr_phases"][0]["freeze"][0], "audio_encoder");
}

#[test]
fn grid_aggregate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("m.json"),
        r#"{"corpora": {"syn": {"kind": "synthetic", "n": 300, "lang": "en", "seed": 5}},
            "schemes": ["text_only", "direct", "curriculum"], "speech_levels": [0, 0.5],
            "seeds": [1, 2], "hash_dim": 4096}"#,
    )
    .unwrap();
    let runs = d.join("runs");
    let out = slu_mix(&["--json", "grid", "--config", p(&d.join("m.json")), "--out", p(&runs)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cells = fs::read_dir(&runs).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(cells, 6);

    let agg = d.join("agg.csv");
    assert!(slu_mix(&["aggregate", "--runs", p(&runs), "--out", p(&agg)]).status.success());
    assert_eq!(fs::read(&agg).unwrap(), fs::read(runs.join("aggregate.csv")).unwrap());
    assert!(slu_mix(&["report", "--in", p(&agg), "--out", p(&d.join("table"))]).status.success());
    let md = fs::read_to_string(d.join("table.md")).unwrap();
    assert!(md.contains("| 50% | Curr. |"));
    let rel = slu_mix(&["report", "--in", p(&agg), "--style", "zeroshot-relative", "--out", p(&d.join("rel"))]);
    assert!(rel.status.success());
}
