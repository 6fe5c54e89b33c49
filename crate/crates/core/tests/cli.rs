use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codesem::corpus::{write_corpus, Snippet};
use codesem::synthetic::{generate, SyntheticConfig, FIXTURES};

fn codesem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codesem"))
        .args(args)
        .output()
        .expect("run codesem")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(n_labeled: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&SyntheticConfig {
            n_labeled,
            n_unlabeled: 60,
            ..Default::default()
        });
        write_corpus(&dir.path().join("corpus.jsonl"), &c.labeled).unwrap();
        write_corpus(&dir.path().join("pool.jsonl"), &c.unlabeled).unwrap();
        fs::write(dir.path().join("taxonomy.json"), c.taxonomy.to_json()).unwrap();
        fs::write(dir.path().join("small.json"), r#"{"estimator": "svm", "kernel": "linear", "C": 10.0, "vocab_size": 400}"#)
            .unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str) -> Output {
        codesem(&[
            "train",
            "--corpus",
            s(&self.path("corpus.jsonl")),
            "--taxonomy",
            s(&self.path("taxonomy.json")),
            "--config",
            s(&self.path("small.json")),
            "--out",
            s(&self.path(out)),
        ])
    }
}

fn lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_then_predict_labels_training_snippets() {
    let ws = Workspace::new(150);
    let out = ws.train("bundle");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["kind"], "flat");
    assert!(ws.path("bundle/manifest.json").is_file());

    let pred = codesem(&["predict", "--bundle", s(&ws.path("bundle")), "--corpus", s(&ws.path("corpus.jsonl"))]);
    assert!(pred.status.success());
    let rows = lines(&pred);
    assert_eq!(rows.len(), 150);
    let text = fs::read_to_string(ws.path("corpus.jsonl")).unwrap();
    let gold: Vec<Snippet> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let correct = rows
        .iter()
        .zip(&gold)
        .filter(|(r, g)| r["id"] == g.id.as_str() && r["lower_label"] == g.lower_label.as_deref().unwrap())
        .count();
    assert!(correct as f64 / 150.0 > 0.95, "{correct}/150");
}

#[test]
fn worked_example_predicts_drop_column() {
    let ws = Workspace::new(300);
    assert!(ws.train("bundle").status.success());
    let probe = ws.path("probe.jsonl");
    write_corpus(&probe, &[Snippet::new("p0", FIXTURES[0].1)]).unwrap();
    let pred = codesem(&["predict", "--bundle", s(&ws.path("bundle")), "--corpus", s(&probe)]);
    assert!(pred.status.success());
    let rows = lines(&pred);
    assert_eq!(rows[0]["upper_label"], "Data_Transform");
    assert_eq!(rows[0]["lower_label"], "Data_Transform.drop_column");
}

#[test]
fn empty_input_gives_empty_output() {
    let ws = Workspace::new(90);
    assert!(ws.train("bundle").status.success());
    fs::write(ws.path("empty.jsonl"), "").unwrap();
    let pred = codesem(&["predict", "--bundle", s(&ws.path("bundle")), "--corpus", s(&ws.path("empty.jsonl"))]);
    assert!(pred.status.success(), "{}", String::from_utf8_lossy(&pred.stderr));
    assert!(pred.stdout.is_empty());
}

#[test]
fn missing_corpus_fails_without_writing_a_bundle() {
    let ws = Workspace::new(30);
    let out = codesem(&["train", "--corpus", s(&ws.path("nope.jsonl")), "--out", s(&ws.path("bundle"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!ws.path("bundle").exists());
}

#[test]
fn unknown_estimator_is_rejected() {
    let ws = Workspace::new(30);
    fs::write(ws.path("bad.json"), r#"{"estimator": "forest"}"#).unwrap();
    let out = codesem(&[
        "train",
        "--corpus",
        s(&ws.path("corpus.jsonl")),
        "--config",
        s(&ws.path("bad.json")),
        "--out",
        s(&ws.path("bundle")),
    ]);
    assert!(!out.status.success());
    assert!(!ws.path("bundle").exists());
}

#[test]
fn unknown_label_is_rejected_against_declared_taxonomy() {
    let ws = Workspace::new(30);
    write_corpus(&ws.path("odd.jsonl"), &[Snippet::labeled("x", "print(1)", "Nowhere.at_all")]).unwrap();
    let out = codesem(&[
        "stats",
        "--corpus",
        s(&ws.path("odd.jsonl")),
        "--taxonomy",
        s(&ws.path("taxonomy.json")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn search_runs_the_requested_budget() {
    let ws = Workspace::new(90);
    let out = codesem(&[
        "search",
        "--corpus",
        s(&ws.path("corpus.jsonl")),
        "--config",
        s(&ws.path("small.json")),
        "--budget",
        "6",
        "--folds",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 6);
    assert_eq!(report["budget"], 6);
}

#[test]
fn same_seed_gives_identical_reports() {
    let ws = Workspace::new(90);
    let run = || {
        codesem(&[
            "--seed",
            "5",
            "eval",
            "--corpus",
            s(&ws.path("corpus.jsonl")),
            "--config",
            s(&ws.path("small.json")),
            "--folds",
            "3",
        ])
    };
    let (a, b) = (run(), run());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn augment_and_stats_round_trip() {
    let ws = Workspace::new(30);
    let out = codesem(&[
        "augment",
        "--corpus",
        s(&ws.path("corpus.jsonl")),
        "--copies",
        "2",
        "--out",
        s(&ws.path("aug.jsonl")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = codesem(&["stats", "--corpus", s(&ws.path("aug.jsonl"))]);
    assert!(stats.status.success());
    let v: serde_json::Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(v["labeled"], 90);
}
