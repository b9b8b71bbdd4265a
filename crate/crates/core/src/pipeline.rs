//! End-to-end orchestration: train the autoencoder on normal windows, fit the
//! OCSVM on reconstruction residuals, classify windows, explain anomalies,
//! score the results, and search over window sizes.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};

use crate::autoencoder::{self, AutoencoderModel, TrainOptions, TrainingHistory};
use crate::error::{Error, Result};
use crate::explain::{
    gradient_shap, AttributionMatrix, BaselineSet, DifferentiableScore,
};
use crate::ingest::{make_windows, split_train_test, RecordTable, Scaler, Window};
use crate::ocsvm::{self, FitReport, OcsvmConfig, OcsvmModel, Verdict};
use crate::seeds::derive_seed;

/// How a window's reconstruction residual is presented to the OCSVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// d = m: per-feature mean absolute residual over the window.
    Aggregated,
    /// d = l * m: row-major absolute residuals.
    Flattened,
}

impl ResidualMode {
    pub fn dimension(&self, window_len: usize, num_features: usize) -> usize {
        match self {
            ResidualMode::Aggregated => num_features,
            ResidualMode::Flattened => window_len * num_features,
        }
    }
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aggregated" => Ok(ResidualMode::Aggregated),
            "flattened" => Ok(ResidualMode::Flattened),
            other => Err(Error::InvalidArgument(format!(
                "unknown residual mode {other:?} (expected aggregated or flattened)"
            ))),
        }
    }
}

/// Residual of one window against its reconstruction. All entries are >= 0.
pub fn residual_vector(
    window: &ArrayView2<f64>,
    reconstruction: &ArrayView2<f64>,
    mode: ResidualMode,
) -> Result<Array1<f64>> {
    if window.shape() != reconstruction.shape() {
        return Err(Error::shape(
            format!("{:?}", window.shape()),
            format!("{:?}", reconstruction.shape()),
        ));
    }
    let (l, m) = (window.nrows(), window.ncols());
    match mode {
        ResidualMode::Aggregated => {
            let mut out = Array1::zeros(m);
            for t in 0..l {
                for k in 0..m {
                    out[k] += (window[[t, k]] - reconstruction[[t, k]]).abs();
                }
            }
            out /= l as f64;
            Ok(out)
        }
        ResidualMode::Flattened => {
            let mut out = Array1::zeros(l * m);
            for t in 0..l {
                for k in 0..m {
                    out[t * m + k] = (window[[t, k]] - reconstruction[[t, k]]).abs();
                }
            }
            Ok(out)
        }
    }
}

/// The anomaly surrogate s(X) = sum((X - reconstruct(X))^2) as a
/// differentiable score, the quantity the explainer attributes.
pub struct SurrogateScore<'a> {
    model: &'a AutoencoderModel,
}

impl<'a> SurrogateScore<'a> {
    pub fn new(model: &'a AutoencoderModel) -> Self {
        SurrogateScore { model }
    }
}

impl DifferentiableScore for SurrogateScore<'_> {
    fn score(&self, x: &ArrayView2<f64>) -> Result<f64> {
        self.model.surrogate_score(x)
    }

    fn gradient(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        autoencoder::input_gradient(self.model, x)
    }

    fn gradient_batch(&self, xs: &[ArrayView2<f64>]) -> Result<Vec<Array2<f64>>> {
        autoencoder::input_gradients_batch(self.model, xs)
    }
}

/// A trained detector: autoencoder, OCSVM over its residuals, and the
/// residual representation both were fitted with.
#[derive(Debug, Clone)]
pub struct Detector {
    pub autoencoder: AutoencoderModel,
    pub ocsvm: OcsvmModel,
    pub residual_mode: ResidualMode,
}

impl Detector {
    fn check_consistency(&self) -> Result<()> {
        let expected = self
            .residual_mode
            .dimension(self.autoencoder.window_len, self.autoencoder.num_features);
        let actual = self.ocsvm.support_vectors.ncols();
        if expected != actual {
            return Err(Error::shape(
                format!("OCSVM dimension {expected}"),
                format!("{actual}"),
            ));
        }
        Ok(())
    }
}

/// One verdict per window, in window order.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub start_index: usize,
    pub verdict: Verdict,
    pub decision: f64,
    /// Anomaly surrogate s(X).
    pub score: f64,
    /// Present iff the verdict is anomaly and an explanation was requested.
    pub attribution: Option<AttributionMatrix>,
}

/// Monte Carlo explanation settings for [`detect`].
#[derive(Debug, Clone)]
pub struct ExplainParams {
    pub baselines: BaselineSet,
    pub n_samples: usize,
    pub seed: u64,
}

/// Run the detector over windows. Anomalous windows are explained when
/// `explain` is given; each window's sampler seed derives from the window
/// start index, so results do not depend on which other windows are present.
pub fn detect(
    detector: &Detector,
    windows: &[Window],
    explain: Option<&ExplainParams>,
) -> Result<Vec<Detection>> {
    detector.check_consistency()?;
    let mut detections = Vec::with_capacity(windows.len());
    for window in windows {
        let view = window.view();
        let reconstruction = detector.autoencoder.reconstruct(&view)?;
        let residual = residual_vector(&view, &reconstruction.view(), detector.residual_mode)?;
        let decision = detector.ocsvm.decision(&residual.view())?;
        let verdict = if decision < 0.0 {
            Verdict::Anomaly
        } else {
            Verdict::Normal
        };
        let score = view
            .iter()
            .zip(reconstruction.iter())
            .map(|(x, r)| (x - r) * (x - r))
            .sum();
        let attribution = match (verdict, explain) {
            (Verdict::Anomaly, Some(params)) => Some(gradient_shap(
                &SurrogateScore::new(&detector.autoencoder),
                &view,
                &params.baselines,
                params.n_samples,
                derive_seed(params.seed, window.start_index as u64),
            )?),
            _ => None,
        };
        detections.push(Detection {
            start_index: window.start_index,
            verdict,
            decision,
            score,
            attribution,
        });
    }
    Ok(detections)
}

/// Confusion counts with derived precision, recall, and F1. Anomaly is the
/// positive class; all three derived metrics are 0 when their denominator is.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Metrics {
    pub fn from_counts(
        true_positives: usize,
        false_positives: usize,
        true_negatives: usize,
        false_negatives: usize,
    ) -> Metrics {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(true_positives, true_positives + false_positives);
        let recall = ratio(true_positives, true_positives + false_negatives);
        Metrics {
            true_positives,
            false_positives,
            true_negatives,
            false_negatives,
            precision,
            recall,
            f1: harmonic_f1(precision, recall),
        }
    }
}

/// Score detections against per-window labels (1 = attack window).
pub fn evaluate(detections: &[Detection], window_labels: &[u8]) -> Result<Metrics> {
    if detections.len() != window_labels.len() {
        return Err(Error::shape(
            format!("{} labels", detections.len()),
            format!("{} labels", window_labels.len()),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (det, &label) in detections.iter().zip(window_labels) {
        match (det.verdict, label) {
            (Verdict::Anomaly, 1) => tp += 1,
            (Verdict::Anomaly, _) => fp += 1,
            (Verdict::Normal, 1) => fn_ += 1,
            (Verdict::Normal, _) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

/// Everything needed to train one detector.
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub window_len: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub train: TrainOptions,
    pub ocsvm: OcsvmConfig,
    pub residual_mode: ResidualMode,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            window_len: 8,
            hidden_dim: 32,
            latent_dim: 16,
            train: TrainOptions::default(),
            ocsvm: OcsvmConfig::default(),
            residual_mode: ResidualMode::Aggregated,
        }
    }
}

/// Byproducts of [`train_detector`].
#[derive(Debug, Clone)]
pub struct TrainingArtifacts {
    pub history: TrainingHistory,
    pub ocsvm_report: FitReport,
    /// Number of all-normal windows the models were fitted on.
    pub training_windows: usize,
}

/// Fit the full detector on an (already scaled) training table. Model fitting
/// only sees windows free of attack rows; seeds for initialization, shuffling,
/// and the OCSVM derive from the single `seed`.
pub fn train_detector(
    train_table: &RecordTable,
    params: &PipelineParams,
    seed: u64,
) -> Result<(Detector, TrainingArtifacts)> {
    let windows = make_windows(train_table, params.window_len)?;
    let normal: Vec<Window> = windows.into_iter().filter(|w| w.label == 0).collect();
    if normal.is_empty() {
        return Err(Error::EmptyInput(
            "no all-normal training windows available".into(),
        ));
    }

    let init = autoencoder::init_model(
        train_table.num_features(),
        params.window_len,
        params.hidden_dim,
        params.latent_dim,
        derive_seed(seed, 0),
    )?;
    let train_opts = TrainOptions {
        seed: derive_seed(seed, 1),
        ..params.train.clone()
    };
    let (model, history) = autoencoder::train(&init, &normal, &train_opts)?;

    let d = params
        .residual_mode
        .dimension(params.window_len, train_table.num_features());
    let mut residuals = Array2::zeros((normal.len(), d));
    for (i, window) in normal.iter().enumerate() {
        let recon = model.reconstruct(&window.view())?;
        let res = residual_vector(&window.view(), &recon.view(), params.residual_mode)?;
        residuals.row_mut(i).assign(&res);
    }
    let (ocsvm, report) = ocsvm::fit(&residuals.view(), &params.ocsvm)?;

    Ok((
        Detector {
            autoencoder: model,
            ocsvm,
            residual_mode: params.residual_mode,
        },
        TrainingArtifacts {
            history,
            ocsvm_report: report,
            training_windows: normal.len(),
        },
    ))
}

/// Candidate window sizes tried when none are specified.
pub const DEFAULT_GRID_SIZES: [usize; 4] = [4, 8, 16, 32];

/// Share of the grid-search table used for fitting; the trailing remainder
/// is the validation slice.
const GRID_FIT_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, serde::Serialize)]
pub struct GridCandidateReport {
    pub window_len: usize,
    pub metrics: Metrics,
    pub wall_time_ms: u128,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct GridSearchReport {
    pub candidates: Vec<GridCandidateReport>,
    /// Highest validation F1; ties go to the smallest window.
    pub selected: usize,
}

/// Window-size search over the training table. The last 20% of rows become a
/// validation slice; the pipeline is trained on the rest and scored on it.
/// Unlabeled tables get seeded synthetic injections in the validation slice
/// so that F1 is still defined.
pub fn grid_search(
    table: &RecordTable,
    candidate_sizes: &[usize],
    params: &PipelineParams,
    seed: u64,
) -> Result<GridSearchReport> {
    if candidate_sizes.is_empty() {
        return Err(Error::InvalidArgument("no candidate window sizes".into()));
    }
    if let Some(&bad) = candidate_sizes.iter().find(|&&c| c < 1) {
        return Err(Error::InvalidArgument(format!(
            "candidate window size {bad} must be >= 1"
        )));
    }

    let (fit_part, mut val_part) = split_train_test(table, GRID_FIT_FRACTION)?;
    if val_part.labels.is_none() {
        let labels = crate::synthetic::inject_segments(
            &mut val_part.rows,
            0.05,
            derive_seed(seed, 0xA0),
        );
        val_part.labels = Some(labels);
    }
    let scaler = fit_training_scaler(&fit_part)?;
    let scaled_fit = scaler.apply(&fit_part)?;
    let scaled_val = scaler.apply(&val_part)?;

    let mut candidates = Vec::with_capacity(candidate_sizes.len());
    for (idx, &window_len) in candidate_sizes.iter().enumerate() {
        let started = Instant::now();
        let candidate_params = PipelineParams {
            window_len,
            ..params.clone()
        };
        let (detector, _) =
            train_detector(&scaled_fit, &candidate_params, derive_seed(seed, idx as u64))?;
        let val_windows = make_windows(&scaled_val, window_len)?;
        let detections = detect(&detector, &val_windows, None)?;
        let labels: Vec<u8> = val_windows.iter().map(|w| w.label).collect();
        let metrics = evaluate(&detections, &labels)?;
        candidates.push(GridCandidateReport {
            window_len,
            metrics,
            wall_time_ms: started.elapsed().as_millis(),
        });
    }

    let selected = candidates
        .iter()
        .map(|c| (c.metrics.f1, c.window_len))
        .fold((f64::NEG_INFINITY, usize::MAX), |(best_f1, best_l), (f1, l)| {
            if f1 > best_f1 || (f1 == best_f1 && l < best_l) {
                (f1, l)
            } else {
                (best_f1, best_l)
            }
        })
        .1;

    Ok(GridSearchReport {
        candidates,
        selected,
    })
}

/// Scaler for model fitting: fitted on the normal rows of the training
/// partition when labels are present, otherwise on all of it.
pub fn fit_training_scaler(train_table: &RecordTable) -> Result<Scaler> {
    match &train_table.labels {
        Some(labels) if labels.contains(&1) => {
            let keep: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == 0)
                .map(|(i, _)| i)
                .collect();
            if keep.is_empty() {
                return Err(Error::EmptyInput("training table has no normal rows".into()));
            }
            let mut rows = Array2::zeros((keep.len(), train_table.num_features()));
            for (dst, &src) in keep.iter().enumerate() {
                rows.row_mut(dst).assign(&train_table.rows.row(src));
            }
            let normal = RecordTable {
                feature_names: train_table.feature_names.clone(),
                rows,
                labels: None,
            };
            Scaler::fit(&normal)
        }
        _ => Scaler::fit(train_table),
    }
}
