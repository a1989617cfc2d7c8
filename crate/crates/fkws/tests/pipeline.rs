//! End-to-end runs of the compiled binary: the full subcommand chain,
//! determinism across independent runs, error exit codes, and cleanup of
//! partial outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_CONFIG: &str = "\
seed = 17

[model]
channels = [4, 4, 4]
fc1 = 16

[synth]
train_positives = 5
train_negatives = 5
test_positives = 3
test_negatives = 3

[train]
batch = 16
max_epochs = 2
";

fn fkws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkws"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(config: &Path, subcommand: &str) {
    let out = fkws(&[subcommand, "--config", config.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{subcommand} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_pipeline(dir: &Path) -> Vec<u8> {
    let config = dir.join("exp.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    for sub in ["synth", "features", "train-domain", "train-kws", "evaluate"] {
        run_ok(&config, sub);
    }
    fs::read(dir.join("reports/summary.json")).unwrap()
}

#[test]
fn full_pipeline_is_reproducible_across_independent_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary_a = run_pipeline(a.path());
    let summary_b = run_pipeline(b.path());
    assert!(!summary_a.is_empty());
    assert_eq!(summary_a, summary_b, "summaries differ between identical runs");

    // a second evaluate over the same artifacts must reproduce the bytes
    let config = a.path().join("exp.toml");
    run_ok(&config, "evaluate");
    let again = fs::read(a.path().join("reports/summary.json")).unwrap();
    assert_eq!(summary_a, again);
}

#[test]
fn summary_reports_every_test_domain() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = run_pipeline(dir.path());
    let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let keys: Vec<&str> = value.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["0.25m", "1m", "3m"]);
    for (_, entry) in value.as_object().unwrap() {
        let fr = entry["fr_at_fa1"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&fr));
        assert!(entry["negative_hours"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn embedding_variant_without_domain_net_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let out = fkws(&[
        "train-kws",
        "--config",
        config.to_str().unwrap(),
        "--variant",
        "emb1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.lines().count(), 1, "stderr not a single line: {stderr}");
    assert!(stderr.starts_with("error: config: "), "{stderr}");
}

#[test]
fn missing_inputs_exit_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, TINY_CONFIG).unwrap();

    // nothing synthesized yet: every downstream step is a data error
    for sub in ["features", "train-domain", "train-kws", "score", "evaluate"] {
        let out = fkws(&[sub, "--config", config.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(3), "{sub} should be a data error");
    }
}

#[test]
fn failed_run_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    run_ok(&config, "synth");

    // break one training clip so feature extraction dies midway
    let victim = dir.path().join("corpus/train/pos_0002_d1m.wav");
    assert!(victim.exists());
    fs::write(&victim, b"not a wav").unwrap();

    let out = fkws(&["features", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(
        !dir.path().join("features/train").exists(),
        "partial feature cache left behind"
    );
}
