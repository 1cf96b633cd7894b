use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lnmt");

fn lnmt(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env("LNMT_CHECKPOINT_DIR", dir.join("ck"))
        .args(args)
        .output()
        .unwrap()
}

fn last_stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or("").to_string()
}

const TINY: &str = "stage1.epochs = 2\nstage2.generations = 2\ncorpus.n_labeled = 30\ncorpus.n_val = 30\ncorpus.n_test = 30\ncorpus.n_unlabeled = 60\n";

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), TINY).unwrap();
    let ok = |o: Output| {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    ok(lnmt(d, &["--config", "run.cfg", "generate", "--out", "data", "--seed", "1"]));
    for f in ["corpus.jsonl", "hidden_labels.jsonl", "lexicon.tsv", "vectors.txt", "noisy_weak_labels.jsonl"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    ok(lnmt(
        d,
        &[
            "--config",
            "run.cfg",
            "pretrain",
            "--corpus",
            "data/corpus.jsonl",
            "--lexicon",
            "data/lexicon.tsv",
            "--vectors",
            "data/vectors.txt",
        ],
    ));
    assert!(d.join("ck/stage1.ckpt").exists());
    assert!(d.join("ck/stage1_epochs.jsonl").exists());
    ok(lnmt(
        d,
        &[
            "--config",
            "run.cfg",
            "refine",
            "--ckpt",
            "ck/stage1.ckpt",
            "--corpus",
            "data/corpus.jsonl",
            "--hidden",
            "data/hidden_labels.jsonl",
        ],
    ));
    let gens = std::fs::read_to_string(d.join("ck/generations.jsonl")).unwrap();
    assert_eq!(gens.lines().count(), 2);
    assert!(gens.contains("weak_label_accuracy"));

    ok(lnmt(
        d,
        &["evaluate", "--ckpt", "ck/stage2.ckpt", "--corpus", "data/corpus.jsonl", "--split", "test", "--out", "metrics.json"],
    ));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["n_eval"], 30);
    for k in ["accuracy", "auc_roc", "fake", "real", "confusion"] {
        assert!(m.get(k).is_some(), "{k}");
    }

    ok(lnmt(d, &["annotate", "--ckpt", "ck/stage1.ckpt", "--corpus", "data/corpus.jsonl", "--out", "wl.jsonl"]));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(d.join("wl.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 60);
    for l in &lines {
        let y = l["y_u"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&y));
        assert!(l["id"].is_string());
    }
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = lnmt(dir.path(), &["evaluate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage"), "{err}");
    assert!(last_stderr_line(&o).starts_with("lnmt: error[usage]: "));
}

#[test]
fn failures_are_single_line_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = lnmt(d, &["evaluate", "--ckpt", "nope.ckpt", "--corpus", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(String::from_utf8_lossy(&missing.stderr).lines().count(), 1);
    assert!(last_stderr_line(&missing).starts_with("lnmt: error[io]: "));

    let bad_key = lnmt(d, &["--set", "stage2.alfa=0.5", "generate", "--out", "x"]);
    assert_eq!(bad_key.status.code(), Some(4));
    assert!(last_stderr_line(&bad_key).starts_with("lnmt: error[config]: "));

    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    std::fs::write(d.join("c.jsonl"), "").unwrap();
    let junk = lnmt(d, &["evaluate", "--ckpt", "junk.ckpt", "--corpus", "c.jsonl"]);
    assert_eq!(junk.status.code(), Some(5));
    assert!(last_stderr_line(&junk).starts_with("lnmt: error[checkpoint]: "));
}

#[test]
fn checkpoint_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), format!("{TINY}checkpoint_dir = \"elsewhere\"\n")).unwrap();
    assert!(lnmt(d, &["--config", "run.cfg", "generate", "--out", "data"]).status.success());
    let o = lnmt(d, &["--config", "run.cfg", "pretrain", "--corpus", "data/corpus.jsonl"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("ck/stage1.ckpt").exists());
    assert!(!d.join("elsewhere").exists());
}
