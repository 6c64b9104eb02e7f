use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "synth": { "n_utterances": 12, "n_test_utterances": 4, "dev_fraction": 0.25, "syllables": [3, 5], "seed": 5 },
  "model": { "channels": [4, 8], "blocks": [1, 1], "stem_stride": 2, "embedding_dim": 16, "sf_dense_dim": 8, "fusion_hidden_dim": 16 },
  "train": { "max_epochs": 3 },
  "context_size": 1,
  "patterns": ["T4-T4", "T2-T2"]
}"#;

fn tonelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonelab")).args(args).output().unwrap()
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().expect("empty stdout")).unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = tonelab(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    summary(&out)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn digest(path: &Path) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut files: Vec<_> = walk(path);
    files.sort();
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for f in files {
        f.strip_prefix(path).unwrap().hash(&mut h);
        std::fs::read(&f).unwrap().hash(&mut h);
    }
    h.finish()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    if dir.is_file() {
        return vec![dir.to_path_buf()];
    }
    std::fs::read_dir(dir).unwrap().flat_map(|e| walk(&e.unwrap().path())).collect()
}

#[test]
fn gradcheck_passes() {
    let s = ok(&["gradcheck", "--seed", "7"]);
    assert!(s["max_rel_err"].as_f64().unwrap() < 1e-5);
}

#[test]
fn usage_errors_exit_2() {
    let out = tonelab(&["featurize", "--audio-dir", "a", "--alignments", "b", "--out", "c"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(tonelab(&["transcribe"]).status.code(), Some(2));
    assert_eq!(tonelab(&["train", "--features", "f", "--dev", "d", "--out", "o", "--variant", "huge"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1_with_the_error_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = tonelab(&[
        "featurize",
        "--audio-dir",
        p(dir.path()),
        "--alignments",
        "missing.tsv",
        "--vocab",
        p(&dir.path().join("missing.txt")),
        "--out",
        p(&dir.path().join("f")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("IoError"));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"synth": {"n_utterances": 2, "jitter_max_s": 0.5}}"#).unwrap();
    let out = tonelab(&["synth", "--config", p(&cfg), "--out", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("InvalidConfig"));
}

/// synth, featurize three splits, train, eval.
fn pipeline(root: &Path) {
    let cfg = root.join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let corpus = root.join("corpus");
    let s = ok(&["synth", "--config", p(&cfg), "--out", p(&corpus), "--seed", "9"]);
    assert_eq!(s["seed"], 9);
    assert_eq!(s["utterances"], 16);
    for split in ["train", "dev", "test"] {
        ok(&[
            "featurize",
            "--audio-dir",
            p(&corpus.join("wav")),
            "--alignments",
            p(&corpus.join("jittered.tsv")),
            "--vocab",
            p(&corpus.join("vocab.txt")),
            "--config",
            p(&cfg),
            "--prefix",
            &format!("{split}_"),
            "--out",
            p(&root.join(format!("feat_{split}"))),
        ]);
    }
    let ckpt = root.join("run").join("model.ckpt");
    std::fs::create_dir_all(ckpt.parent().unwrap()).unwrap();
    let t = ok(&[
        "train",
        "--features",
        p(&root.join("feat_train")),
        "--dev",
        p(&root.join("feat_dev")),
        "--config",
        p(&cfg),
        "--variant",
        "sf_ctx",
        "--out",
        p(&ckpt),
    ]);
    assert_eq!(t["epochs"], 3);
    let history: Value = serde_json::from_slice(&std::fs::read(root.join("run/history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 3);
    let e = ok(&[
        "eval",
        "--features",
        p(&root.join("feat_test")),
        "--model",
        p(&ckpt),
        "--config",
        p(&cfg),
        "--out",
        p(&root.join("report.json")),
        "--markdown",
        p(&root.join("report.md")),
    ]);
    let acc = e["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let report: Value = serde_json::from_slice(&std::fs::read(root.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["accuracy"].as_f64(), Some(acc));
    assert!(std::fs::read_to_string(root.join("report.md")).unwrap().contains('|'));
}

#[test]
fn end_to_end_runs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for rel in ["corpus", "feat_train", "feat_test", "run", "report.json"] {
        assert_eq!(digest(&a.path().join(rel)), digest(&b.path().join(rel)), "{rel}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let corpus = dir.path().join("c");
    assert_eq!(ok(&["synth", "--config", p(&cfg), "--out", p(&corpus)])["seed"], 5);
    let s = ok(&[
        "featurize",
        "--audio-dir",
        p(&corpus.join("wav")),
        "--alignments",
        p(&corpus.join("truth.tsv")),
        "--vocab",
        p(&corpus.join("vocab.txt")),
        "--config",
        p(&cfg),
        "--context-size",
        "0",
        "--segment-mode",
        "plain",
        "--out",
        p(&dir.path().join("f")),
    ]);
    assert_eq!(s["context_size"], 0);
    assert_eq!(s["segment_mode"], "plain");
}
