//! End-to-end checks of the command-line surface: subcommand plumbing, file
//! outputs, and exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radprompt"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{"train": {"epochs": 3, "folds": 3, "context_tokens": 4, "seed": 9}}"#,
    )
    .unwrap();
    path
}

#[test]
fn synth_train_evaluate_sweep_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let data_dir = dir.path().join("data");
    let out_dir = dir.path().join("runs");

    let status = bin()
        .args(["synth", "--out-dir"])
        .arg(&data_dir)
        .args(["--instances", "60", "--features", "8", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["features.csv", "embeddings.json", "labels.csv", "config.json"] {
        assert!(data_dir.join(name).exists(), "{name} missing");
    }

    let status = bin()
        .args(["train", "--features"])
        .arg(data_dir.join("features.csv"))
        .arg("--embeddings")
        .arg(data_dir.join("embeddings.json"))
        .arg("--labels")
        .arg(data_dir.join("labels.csv"))
        .arg("--out-dir")
        .arg(&out_dir)
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    for fold in 0..3 {
        assert!(out_dir.join(format!("checkpoint_fold{fold}.json")).exists());
        assert!(out_dir.join(format!("metrics_fold{fold}.json")).exists());
    }
    assert!(out_dir.join("cv_summary.json").exists());

    let metrics_path = dir.path().join("metrics.json");
    let roc_path = dir.path().join("roc.csv");
    let status = bin()
        .args(["evaluate", "--checkpoint"])
        .arg(out_dir.join("checkpoint_fold0.json"))
        .arg("--features")
        .arg(data_dir.join("features.csv"))
        .arg("--embeddings")
        .arg(data_dir.join("embeddings.json"))
        .arg("--labels")
        .arg(data_dir.join("labels.csv"))
        .arg("--metrics-out")
        .arg(&metrics_path)
        .arg("--roc-out")
        .arg(&roc_path)
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert!(metrics.get("accuracy").is_some());
    let roc = std::fs::read_to_string(&roc_path).unwrap();
    assert!(roc.starts_with("class,fpr,tpr,threshold"));

    let sweep_path = dir.path().join("sweep.csv");
    let status = bin()
        .args(["sweep", "--features"])
        .arg(data_dir.join("features.csv"))
        .arg("--embeddings")
        .arg(data_dir.join("embeddings.json"))
        .arg("--labels")
        .arg(data_dir.join("labels.csv"))
        .arg("--out")
        .arg(&sweep_path)
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = std::fs::read_to_string(&sweep_path).unwrap();
    assert_eq!(sweep.lines().count(), 8, "header plus 7 rows:\n{sweep}");
}

#[test]
fn selftest_exits_zero() {
    let status = bin().arg("selftest").status().unwrap();
    assert!(status.success());
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["extract", "--data"])
        .arg(dir.path().join("nope.json"))
        .arg("--out-dir")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"train": {"momentum": 1.5, "epochs": 1, "folds": 2}}"#).unwrap();
    let data_dir = dir.path().join("data");
    let status = bin()
        .args(["synth", "--out-dir"])
        .arg(&data_dir)
        .args(["--instances", "20", "--features", "4"])
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .args(["train", "--features"])
        .arg(data_dir.join("features.csv"))
        .arg("--embeddings")
        .arg(data_dir.join("embeddings.json"))
        .arg("--labels")
        .arg(data_dir.join("labels.csv"))
        .arg("--out-dir")
        .arg(dir.path().join("runs"))
        .arg("--config")
        .arg(&config)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let status = bin()
            .args(["synth", "--out-dir"])
            .arg(out)
            .args(["--instances", "12", "--features", "4", "--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let fa = std::fs::read(a.join("features.csv")).unwrap();
    let fb = std::fs::read(b.join("features.csv")).unwrap();
    let fc = std::fs::read(c.join("features.csv")).unwrap();
    assert_eq!(fa, fb, "same seed must reproduce identical output");
    assert_ne!(fa, fc, "different seed must change the data");
}
