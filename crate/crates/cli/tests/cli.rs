use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interaction"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// Synthetic data plus a two-epoch toy config.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--n", "18", "--seed", "1", "--out", "train.jsonl"], d);
    ok(&["synth", "--n", "6", "--seed", "2", "--split", "val", "--out", "val.jsonl"], d);
    ok(&["synth", "--n", "9", "--seed", "3", "--split", "test", "--out", "test.jsonl"], d);
    std::fs::write(
        d.join("cfg.toml"),
        "profile = \"toy\"\n[model]\nhidden = 16\nffn = 32\n[training]\nepochs = 2\nseeds = [1000]\n[data]\ntrain = \"train.jsonl\"\nval = \"val.jsonl\"\n",
    )
    .unwrap();
    std::fs::write(
        d.join("pairs.jsonl"),
        "{\"premise\": \"a tall man runs in the park\", \"hypothesis\": \"the man walks\"}\n\
         {\"premise\": \"a shy cat naps at home\", \"hypothesis\": \"the cat sings\"}\n",
    )
    .unwrap();
    dir
}

#[test]
fn synth_is_deterministic_and_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["synth", "--n", "30", "--seed", "4"], dir.path());
    let b = ok(&["synth", "--n", "30", "--seed", "4"], dir.path());
    assert_eq!(a, b);
    let recs = json_lines(&a);
    assert_eq!(recs.len(), 30);
    for label in ["entailment", "contradiction", "neutral"] {
        assert_eq!(recs.iter().filter(|r| r["label"] == label).count(), 10);
    }
    let test = json_lines(&ok(&["synth", "--n", "3", "--split", "test"], dir.path()));
    assert!(test[0]["explanation_3"].is_string());
}

#[test]
fn train_writes_per_seed_outputs_and_echo() {
    let dir = workspace();
    let d = dir.path();
    let out = json_lines(&ok(
        &["train", "--config", "cfg.toml", "--model", "interaction_m3", "--run-dir", "run", "--seeds", "1,2,3"],
        d,
    ));
    assert_eq!(out.len(), 3);
    for s in [1, 2, 3] {
        let seed_dir = d.join(format!("run/interaction_m3/seed_{s}"));
        assert!(seed_dir.join("best.ckpt").exists() && seed_dir.join("last.ckpt").exists());
        let log = std::fs::read_to_string(seed_dir.join("train_log.jsonl")).unwrap();
        let lines = json_lines(&log);
        assert_eq!(lines.len(), 2);
        assert!(lines[0]["val_loss"].is_number());
    }
    let echo = std::fs::read_to_string(d.join("run/interaction_m3/config.toml")).unwrap();
    assert!(echo.contains("seeds = [1, 2, 3]"));
    assert!(echo.contains("hidden = 16"));

    // the echoed config reproduces the run from another directory
    let other = tempfile::tempdir().unwrap();
    std::fs::copy(d.join("run/interaction_m3/config.toml"), other.path().join("cfg.toml")).unwrap();
    ok(
        &["train", "--config", "cfg.toml", "--model", "interaction_m3", "--run-dir", "run", "--seeds", "2"],
        other.path(),
    );
    let a = std::fs::read(d.join("run/interaction_m3/seed_2/best.ckpt")).unwrap();
    let b = std::fs::read(other.path().join("run/interaction_m3/seed_2/best.ckpt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn run_seed_overrides_config() {
    let dir = workspace();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_interaction"))
        .args(["train", "--config", "cfg.toml", "--model", "mixture", "--run-dir", "run"])
        .current_dir(d)
        .env("RUN_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(d.join("run/mixture/seed_77/best.ckpt").exists());
    assert!(!d.join("run/mixture/seed_1000").exists());
}

#[test]
fn eval_gates_metrics_by_capability() {
    let dir = workspace();
    let d = dir.path();
    ok(&["train", "--config", "cfg.toml", "--model", "mixture", "--run-dir", "run"], d);
    ok(&["train", "--config", "cfg.toml", "--model", "seq2seq_full", "--run-dir", "run"], d);
    let report: Value = serde_json::from_str(&ok(
        &[
            "eval",
            "--vocab",
            "run/vocab.txt",
            "--data",
            "test.jsonl",
            "--checkpoints",
            "run/mixture/seed_1000/best.ckpt",
            "run/seq2seq_full/seed_1000/best.ckpt",
        ],
        d,
    ))
    .unwrap();
    let fams = report["families"].as_array().unwrap();
    let by = |k: &str| fams.iter().find(|f| f["kind"] == k).unwrap();
    let mix = by("mixture");
    assert!(mix["summary"]["accuracy"].is_object());
    assert!(mix["not_applicable"].as_array().unwrap().contains(&Value::from("bleu")));
    let s2s = by("seq2seq_full");
    assert!(s2s["summary"]["perplexity"]["mean"].as_f64().unwrap() > 1.0);
    assert!(s2s["summary"]["bleu"].is_object());
    assert!(s2s["not_applicable"].as_array().unwrap().contains(&Value::from("accuracy")));
    assert_eq!(report["metadata"]["std"], "sample (n-1)");
}

#[test]
fn eval_with_annotations_reports_correct_at_k() {
    let dir = workspace();
    let d = dir.path();
    ok(&["train", "--config", "cfg.toml", "--model", "concvae", "--run-dir", "run"], d);
    let mut ann = String::new();
    for i in 0..3 {
        ann.push_str(&format!(
            "{{\"example_index\": {i}, \"required_args\": [\"a\", \"b\"], \"annotator_1\": [\"a\", \"b\"], \"annotator_2\": [\"a\"], \"annotator_3\": []}}\n"
        ));
    }
    std::fs::write(d.join("ann.jsonl"), ann).unwrap();
    std::fs::write(d.join("eval.toml"), "profile = \"toy\"\n[eval]\ncorrect_k = 3\n").unwrap();
    let report: Value = serde_json::from_str(&ok(
        &[
            "eval",
            "--config",
            "eval.toml",
            "--vocab",
            "run/vocab.txt",
            "--data",
            "test.jsonl",
            "--annotations",
            "ann.jsonl",
            "--checkpoints",
            "run/concvae/seed_1000/best.ckpt",
        ],
        d,
    ))
    .unwrap();
    let c = report["families"][0]["summary"]["correct_at_100"]["mean"].as_f64().unwrap();
    assert!((c - 50.0).abs() < 1e-9);
    assert!(report["metadata"]["config_hash"].is_string());
}

#[test]
fn inference_commands_and_exit_codes() {
    let dir = workspace();
    let d = dir.path();
    ok(&["train", "--config", "cfg.toml", "--model", "interaction_m1", "--run-dir", "run"], d);
    let ck = "run/interaction_m1/seed_1000/best.ckpt";
    let base = ["--checkpoint", ck, "--vocab", "run/vocab.txt", "--input", "pairs.jsonl"];

    let gen = json_lines(&ok(&[&["generate"], &base[..]].concat(), d));
    assert_eq!(gen.len(), 2);
    assert!(gen[0]["label"].is_string() && gen[0]["explanation"].is_string());

    let interp = json_lines(&ok(&[&["interpolate"], &base[..]].concat(), d));
    assert_eq!(interp.len(), 10);
    let ks: Vec<f64> = interp[..5].iter().map(|v| v["k"].as_f64().unwrap()).collect();
    assert_eq!(ks, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    for field in ["premise", "hypothesis", "label", "explanation"] {
        assert!(interp[0][field].is_string(), "{field}");
    }
    let k0 = interp.iter().find(|v| v["index"] == 0 && v["k"] == 0.0).unwrap();
    assert_eq!(k0["explanation"], gen[0]["explanation"]);
    let deduped = json_lines(&ok(&[&["interpolate", "--dedupe", "--k-values=0,0,0"], &base[..]].concat(), d));
    assert_eq!(deduped.len(), 2);

    let cls = json_lines(&ok(&[&["classify"], &base[..]].concat(), d));
    assert_eq!(cls.len(), 2);
    assert_eq!(cls[0]["label"], gen[0]["label"]);

    std::fs::write(d.join("bad.jsonl"), "{\"premise\": \"a man runs\"}\n").unwrap();
    let out = run(&["classify", "--checkpoint", ck, "--vocab", "run/vocab.txt", "--input", "bad.jsonl"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hypothesis"));

    let out = run(&["classify", "--checkpoint", "pairs.jsonl", "--vocab", "run/vocab.txt", "--input", "pairs.jsonl"], d);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("other_vocab.txt"), "<pad>\n<unk>\n<bos>\n<eos>\nzebra\n").unwrap();
    let out = run(&["classify", "--checkpoint", ck, "--vocab", "other_vocab.txt", "--input", "pairs.jsonl"], d);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["train", "--config", "cfg.toml", "--model", "gpt", "--run-dir", "run"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn params_separate_is_twice_mixture_plus_head() {
    let dir = tempfile::tempdir().unwrap();
    let out = json_lines(&ok(
        &["params", "--model", "mixture", "--model", "separate", "--vocab-size", "5000"],
        dir.path(),
    ));
    let mix = out[0]["params"].as_u64().unwrap();
    let sep = out[1]["params"].as_u64().unwrap();
    assert_eq!(sep, 2 * mix + 6 * 512 - 3);
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(d.join("typo.toml"), "[training]\nepoch = 3\n").unwrap();
    let out = run(&["train", "--config", "typo.toml", "--model", "mixture", "--run-dir", "run"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}
