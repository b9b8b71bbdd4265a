//! Subcommand implementations. Every command resolves its configuration,
//! writes the echo, and confines all outputs to the chosen directory.

use std::path::{Path, PathBuf};

use exad_core::error::Error as CoreError;
use exad_core::explain::BaselineSet;
use exad_core::export;
use exad_core::ingest::{make_windows, parse_dataset, split_train_test, RecordTable, Window};
use exad_core::ocsvm::Verdict;
use exad_core::persist::ModelBundle;
use exad_core::pipeline::{
    detect, evaluate, fit_training_scaler, grid_search, train_detector, Detection, Detector,
    ExplainParams,
};
use exad_core::seeds::derive_seed;

use crate::config::RunConfig;
use crate::RunError;

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "training_history.json";
pub const CONFIG_ECHO_FILE: &str = "config_echo.toml";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const ATTRIBUTIONS_FILE: &str = "attributions.csv";
pub const ATTRIBUTION_SUMMARY_FILE: &str = "attribution_summary.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const GRID_REPORT_FILE: &str = "gridsearch.json";

fn load_table(config: &RunConfig) -> Result<RecordTable, RunError> {
    let raw = std::fs::read(&config.dataset.path).map_err(CoreError::Io)?;
    Ok(parse_dataset(&raw, config.dataset_format()?)?)
}

fn write_echo(config: &RunConfig, out: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out).map_err(CoreError::Io)?;
    std::fs::write(out.join(CONFIG_ECHO_FILE), config.to_echo_toml()).map_err(CoreError::Io)?;
    Ok(())
}

fn write(out: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    std::fs::write(out.join(name), contents).map_err(CoreError::Io)?;
    Ok(())
}

pub fn train(config: &RunConfig, out: &Path) -> Result<(), RunError> {
    write_echo(config, out)?;
    let table = load_table(config)?;
    let (train_raw, _) = split_train_test(&table, config.dataset.train_fraction)?;
    let scaler = fit_training_scaler(&train_raw)?;
    let train_scaled = scaler.apply(&train_raw)?;

    let params = config.pipeline_params()?;
    let (detector, artifacts) = train_detector(&train_scaled, &params, config.seed)?;
    if !artifacts.ocsvm_report.converged {
        return Err(RunError::Core(CoreError::NonFinite(format!(
            "OCSVM solver did not converge within {} iterations (KKT violation {})",
            config.ocsvm.max_iterations, artifacts.ocsvm_report.kkt_violation
        ))));
    }

    let bundle = ModelBundle::new(&detector, &scaler, &table.feature_names);
    bundle.save(&out.join(MODEL_FILE))?;
    let history = serde_json::json!({
        "epoch_loss": artifacts.history.epoch_loss,
        "epochs_run": artifacts.history.epochs_run(),
        "training_windows": artifacts.training_windows,
        "ocsvm": artifacts.ocsvm_report,
    });
    write(
        out,
        HISTORY_FILE,
        &serde_json::to_string_pretty(&history).map_err(|e| CoreError::Format(e.to_string()))?,
    )?;
    Ok(())
}

struct LoadedRun {
    detector: Detector,
    train_scaled: RecordTable,
    test_scaled: RecordTable,
    feature_names: Vec<String>,
}

fn load_run(config: &RunConfig, model_path: &Path) -> Result<LoadedRun, RunError> {
    let bundle = ModelBundle::load(model_path)?;
    let table = load_table(config)?;
    if table.feature_names != bundle.feature_names {
        return Err(RunError::Core(CoreError::ShapeMismatch {
            expected: format!("features {:?}", bundle.feature_names),
            actual: format!("{:?}", table.feature_names),
        }));
    }
    let (train_raw, test_raw) = split_train_test(&table, config.dataset.train_fraction)?;
    let scaler = bundle.scaler.clone();
    let feature_names = bundle.feature_names.clone();
    Ok(LoadedRun {
        detector: bundle.into_detector()?,
        train_scaled: scaler.apply(&train_raw)?,
        test_scaled: scaler.apply(&test_raw)?,
        feature_names,
    })
}

fn test_windows(run: &LoadedRun) -> Result<Vec<Window>, RunError> {
    Ok(make_windows(
        &run.test_scaled,
        run.detector.autoencoder.window_len,
    )?)
}

pub fn detect_command(config: &RunConfig, out: &Path, model_path: &Path) -> Result<(), RunError> {
    write_echo(config, out)?;
    let run = load_run(config, model_path)?;
    let windows = test_windows(&run)?;
    let detections = detect(&run.detector, &windows, None)?;
    write(out, DETECTIONS_FILE, &export::detections_to_csv(&detections))?;
    Ok(())
}

pub fn explain_command(config: &RunConfig, out: &Path, model_path: &Path) -> Result<(), RunError> {
    write_echo(config, out)?;
    let run = load_run(config, model_path)?;
    let window_len = run.detector.autoencoder.window_len;

    let train_windows = make_windows(&run.train_scaled, window_len)?;
    let normal: Vec<Window> = train_windows.into_iter().filter(|w| w.label == 0).collect();
    let baselines = BaselineSet::sample_from_windows(
        &normal,
        config.explain.baselines,
        derive_seed(config.seed, 2),
    )?;
    let params = ExplainParams {
        baselines,
        n_samples: config.explain.samples,
        seed: derive_seed(config.seed, 3),
    };

    let windows = test_windows(&run)?;
    let detections = detect(&run.detector, &windows, Some(&params))?;
    write(out, DETECTIONS_FILE, &export::detections_to_csv(&detections))?;
    write(
        out,
        ATTRIBUTIONS_FILE,
        &export::attributions_to_csv(&detections, &windows, &run.feature_names)?,
    )?;
    write(
        out,
        ATTRIBUTION_SUMMARY_FILE,
        &export::attribution_summary_to_csv(&detections, &run.feature_names)?,
    )?;
    Ok(())
}

pub fn eval_command(
    config: &RunConfig,
    out: &Path,
    detections_path: &Path,
) -> Result<(), RunError> {
    write_echo(config, out)?;
    let table = load_table(config)?;
    let (_, test_raw) = split_train_test(&table, config.dataset.train_fraction)?;
    let windows = make_windows(&test_raw, config.window.size)?;
    let labels: Vec<u8> = windows.iter().map(|w| w.label).collect();

    let text = std::fs::read_to_string(detections_path).map_err(CoreError::Io)?;
    let detections = parse_detections_csv(&text)?;
    let metrics = evaluate(&detections, &labels)?;

    let echo = serde_json::to_value(config).map_err(|e| CoreError::Format(e.to_string()))?;
    write(out, METRICS_FILE, &export::metrics_to_json(&metrics, &echo)?)?;
    Ok(())
}

pub fn gridsearch_command(config: &RunConfig, out: &Path) -> Result<(), RunError> {
    write_echo(config, out)?;
    let table = load_table(config)?;
    // Candidates are scored inside the training share only.
    let (train_raw, _) = split_train_test(&table, config.dataset.train_fraction)?;
    let params = config.pipeline_params()?;
    let report = grid_search(&train_raw, &config.gridsearch.candidates, &params, config.seed)?;
    write(out, GRID_REPORT_FILE, &export::grid_report_to_json(&report)?)?;
    Ok(())
}

fn parse_detections_csv(text: &str) -> Result<Vec<Detection>, RunError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "window_start,verdict,decision,score" => {}
        _ => {
            return Err(RunError::Core(CoreError::Parse {
                line: 1,
                message: "missing detections header".into(),
            }))
        }
    }
    let mut detections = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let parse_err = |message: String| {
            RunError::Core(CoreError::Parse {
                line: line_no,
                message,
            })
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", fields.len())));
        }
        let start_index = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad window_start {:?}", fields[0])))?;
        let verdict = match fields[1].trim() {
            "normal" => Verdict::Normal,
            "anomaly" => Verdict::Anomaly,
            other => return Err(parse_err(format!("bad verdict {other:?}"))),
        };
        let decision = fields[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad decision {:?}", fields[2])))?;
        let score = fields[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad score {:?}", fields[3])))?;
        detections.push(Detection {
            start_index,
            verdict,
            decision,
            score,
            attribution: None,
        });
    }
    Ok(detections)
}

pub fn default_model_path(out: &Path) -> PathBuf {
    out.join(MODEL_FILE)
}

pub fn default_detections_path(out: &Path) -> PathBuf {
    out.join(DETECTIONS_FILE)
}
