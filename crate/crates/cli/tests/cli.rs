//! Black-box tests of the `exad` binary: exit codes, artifact layout, and
//! reproducibility of the file outputs.

use std::path::Path;
use std::process::{Command, Output};

fn exad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exad"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Deterministic 240-row, 3-feature telemetry file with two attack bursts in
/// the chronological tail.
fn fixture_csv() -> String {
    let mut text = String::from("pressure,flow,valve,result\n");
    for t in 0..240 {
        let tf = t as f64;
        let mut pressure = 10.0 + 2.0 * (tf / 20.0).sin();
        let flow = 5.0 + 1.5 * (tf / 25.0).sin();
        let valve = 0.5 + 0.5 * (tf / 10.0).sin();
        let attack = (200..208).contains(&t) || (220..228).contains(&t);
        if attack {
            pressure *= 10.0;
        }
        text.push_str(&format!(
            "{pressure:.6},{flow:.6},{valve:.6},{}\n",
            u8::from(attack)
        ));
    }
    text
}

fn write_fixture(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("telemetry.csv");
    std::fs::write(&data, fixture_csv()).unwrap();
    data
}

fn write_config(dir: &Path, data: &Path, out: &Path) -> std::path::PathBuf {
    let config = dir.join("run.toml");
    std::fs::write(
        &config,
        format!(
            "\
seed = 7
output_dir = {out:?}

[dataset]
path = {data:?}

[window]
size = 4

[autoencoder]
hidden_dim = 8
latent_dim = 4
epochs = 5
learning_rate = 0.001
batch_size = 16

[ocsvm]
nu = 0.05
tolerance = 1e-4
max_iterations = 100000

[explain]
baselines = 20
samples = 25
"
        ),
    )
    .unwrap();
    config
}

struct TrainedDir {
    _tmp: tempfile::TempDir,
    config: std::path::PathBuf,
    out: std::path::PathBuf,
}

fn trained_dir() -> TrainedDir {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_fixture(tmp.path());
    let out = tmp.path().join("out");
    let config = write_config(tmp.path(), &data, &out);
    let output = exad(&["train", "--config", config.to_str().unwrap()]);
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    TrainedDir {
        _tmp: tmp,
        config,
        out,
    }
}

#[test]
fn train_writes_model_history_and_echo() {
    let dir = trained_dir();
    let model_text = std::fs::read_to_string(dir.out.join("model.json")).unwrap();
    let model: serde_json::Value = serde_json::from_str(&model_text).unwrap();
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["feature_names"].as_array().unwrap().len(), 3);

    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.out.join("training_history.json")).unwrap())
            .unwrap();
    assert_eq!(history["epochs_run"], 5);
    assert_eq!(history["epoch_loss"].as_array().unwrap().len(), 5);

    let echo = std::fs::read_to_string(dir.out.join("config_echo.toml")).unwrap();
    assert!(echo.contains("hidden_dim = 8"));

    // Nothing written outside the output directory (fixture + config are ours).
    let entries: Vec<String> = std::fs::read_dir(dir._tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let mut sorted = entries.clone();
    sorted.sort();
    assert_eq!(sorted, vec!["out", "run.toml", "telemetry.csv"]);
}

#[test]
fn detect_explain_eval_roundtrip() {
    let dir = trained_dir();
    let config = dir.config.to_str().unwrap();

    let output = exad(&["detect", "--config", config]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let detections = std::fs::read_to_string(dir.out.join("detections.csv")).unwrap();
    // 48 test rows, window 4: 45 windows plus the header.
    assert_eq!(detections.lines().count(), 46);
    assert!(detections.lines().nth(1).unwrap().split(',').count() == 4);

    let output = exad(&["explain", "--config", config]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let attributions = std::fs::read_to_string(dir.out.join("attributions.csv")).unwrap();
    assert!(attributions.starts_with("window_id,timestep,feature_name,shap_value,feature_value"));
    // The spiked feature appears in the summary output.
    let summary = std::fs::read_to_string(dir.out.join("attribution_summary.csv")).unwrap();
    assert!(summary.starts_with("window_id,feature_name,signed_sum,mean_abs,rank"));
    assert!(summary.contains("pressure"));

    let output = exad(&["eval", "--config", config]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.out.join("metrics.json")).unwrap())
            .unwrap();
    let recall = metrics["metrics"]["recall"].as_f64().unwrap();
    assert!(recall >= 0.9, "recall {recall} on the spike fixture");
}

#[test]
fn explain_outputs_are_reproducible_and_seed_sensitive() {
    let dir = trained_dir();
    let config = dir.config.to_str().unwrap();
    assert!(exad(&["explain", "--config", config]).status.success());
    let first = std::fs::read(dir.out.join("attributions.csv")).unwrap();
    assert!(exad(&["explain", "--config", config]).status.success());
    let second = std::fs::read(dir.out.join("attributions.csv")).unwrap();
    assert_eq!(first, second, "same seed must reproduce bytes");

    assert!(exad(&["explain", "--config", config, "--seed", "8"]).status.success());
    let third = std::fs::read(dir.out.join("attributions.csv")).unwrap();
    assert_ne!(first, third, "different seed must change sampling");
}

#[test]
fn unknown_subcommand_exits_one_with_usage() {
    let output = exad(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "{stderr}");
}

#[test]
fn eval_with_mismatched_detections_exits_two() {
    let dir = trained_dir();
    let config = dir.config.to_str().unwrap();
    assert!(exad(&["detect", "--config", config]).status.success());
    // Drop the last detection row: length mismatch against the label count.
    let path = dir.out.join("detections.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let truncated: Vec<&str> = text.lines().collect();
    std::fs::write(&path, truncated[..truncated.len() - 1].join("\n")).unwrap();

    let output = exad(&["eval", "--config", config]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("kind=data"), "{stderr}");
}

#[test]
fn config_range_error_exits_one_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_fixture(tmp.path());
    let config = tmp.path().join("bad.toml");
    std::fs::write(
        &config,
        format!("[dataset]\npath = {data:?}\n[ocsvm]\nnu = 1.5\ntolerance = 1e-4\nmax_iterations = 10\n"),
    )
    .unwrap();
    let output = exad(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nu"), "{stderr}");
    assert!(stderr.contains("kind=config"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_fixture(tmp.path());
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, format!("[dataset]\npath = {data:?}\nbogus = true\n")).unwrap();
    let output = exad(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("bogus"));
}

#[test]
fn missing_dataset_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(&config, "[dataset]\npath = \"nowhere.csv\"\n").unwrap();
    let output = exad(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn solver_non_convergence_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let data = write_fixture(tmp.path());
    let out = tmp.path().join("out");
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "output_dir = {out:?}\n[dataset]\npath = {data:?}\n[window]\nsize = 4\n\
[autoencoder]\nhidden_dim = 8\nlatent_dim = 4\nepochs = 1\nlearning_rate = 0.001\nbatch_size = 16\n\
[ocsvm]\nnu = 0.05\ntolerance = 1e-12\nmax_iterations = 1\n"
        ),
    )
    .unwrap();
    let output = exad(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("kind=numeric"));
}

#[test]
fn gridsearch_writes_report() {
    let dir = trained_dir();
    let config = dir.config.to_str().unwrap();
    // Small candidates so each fit stays quick on the 192-row training share.
    let output = exad(&["gridsearch", "--config", config]);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.out.join("gridsearch.json")).unwrap())
            .unwrap();
    let candidates = report["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 4);
    let selected = report["selected"].as_u64().unwrap();
    assert!([4u64, 8, 16, 32].contains(&selected));
}
