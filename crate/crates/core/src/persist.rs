//! Versioned JSON persistence for the trained model bundle.
//!
//! One self-describing file holds the autoencoder and the OCSVM, together
//! with the scaler, feature names, window length, and residual mode needed to
//! reproduce detection on raw data. Weight matrices are stored row-major with
//! explicit shapes. Loading rejects any format version other than
//! [`FORMAT_VERSION`].

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{AutoencoderModel, GateParams, LstmCellParams};
use crate::error::{Error, Result};
use crate::ingest::Scaler;
use crate::ocsvm::OcsvmModel;
use crate::pipeline::{Detector, ResidualMode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixData {
    rows: usize,
    cols: usize,
    /// Row-major values, rows * cols entries.
    data: Vec<f64>,
}

impl MatrixData {
    fn from_array(a: &Array2<f64>) -> MatrixData {
        MatrixData {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }

    fn into_array(self) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data)
            .map_err(|e| Error::Format(format!("bad matrix shape: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GateData {
    w: MatrixData,
    u: MatrixData,
    b: Vec<f64>,
}

impl GateData {
    fn from_params(g: &GateParams) -> GateData {
        GateData {
            w: MatrixData::from_array(&g.w),
            u: MatrixData::from_array(&g.u),
            b: g.b.to_vec(),
        }
    }

    fn into_params(self) -> Result<GateParams> {
        Ok(GateParams {
            w: self.w.into_array()?,
            u: self.u.into_array()?,
            b: Array1::from_vec(self.b),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellData {
    input: GateData,
    forget: GateData,
    cell: GateData,
    output: GateData,
}

impl CellData {
    fn from_params(c: &LstmCellParams) -> CellData {
        CellData {
            input: GateData::from_params(&c.input),
            forget: GateData::from_params(&c.forget),
            cell: GateData::from_params(&c.cell),
            output: GateData::from_params(&c.output),
        }
    }

    fn into_params(self) -> Result<LstmCellParams> {
        Ok(LstmCellParams {
            input: self.input.into_params()?,
            forget: self.forget.into_params()?,
            cell: self.cell.into_params()?,
            output: self.output.into_params()?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AutoencoderData {
    hidden_dim: usize,
    latent_dim: usize,
    window_len: usize,
    num_features: usize,
    seed: u64,
    encoder: CellData,
    latent_w: MatrixData,
    latent_b: Vec<f64>,
    decoder: CellData,
    output_w: MatrixData,
    output_b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OcsvmData {
    support_vectors: MatrixData,
    alpha: Vec<f64>,
    rho: f64,
    gamma: f64,
}

/// The on-disk document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub residual_mode: ResidualMode,
    pub scaler: Scaler,
    autoencoder: AutoencoderData,
    ocsvm: OcsvmData,
}

impl ModelBundle {
    pub fn new(detector: &Detector, scaler: &Scaler, feature_names: &[String]) -> ModelBundle {
        let ae = &detector.autoencoder;
        ModelBundle {
            format_version: FORMAT_VERSION,
            feature_names: feature_names.to_vec(),
            residual_mode: detector.residual_mode,
            scaler: scaler.clone(),
            autoencoder: AutoencoderData {
                hidden_dim: ae.hidden_dim,
                latent_dim: ae.latent_dim,
                window_len: ae.window_len,
                num_features: ae.num_features,
                seed: ae.seed,
                encoder: CellData::from_params(&ae.encoder),
                latent_w: MatrixData::from_array(&ae.latent_w),
                latent_b: ae.latent_b.to_vec(),
                decoder: CellData::from_params(&ae.decoder),
                output_w: MatrixData::from_array(&ae.output_w),
                output_b: ae.output_b.to_vec(),
            },
            ocsvm: OcsvmData {
                support_vectors: MatrixData::from_array(&detector.ocsvm.support_vectors),
                alpha: detector.ocsvm.alpha.to_vec(),
                rho: detector.ocsvm.rho,
                gamma: detector.ocsvm.gamma,
            },
        }
    }

    pub fn window_len(&self) -> usize {
        self.autoencoder.window_len
    }

    /// Rebuild the detector, validating stored shapes.
    pub fn into_detector(self) -> Result<Detector> {
        let a = self.autoencoder;
        let autoencoder = AutoencoderModel {
            encoder: a.encoder.into_params()?,
            latent_w: a.latent_w.into_array()?,
            latent_b: Array1::from_vec(a.latent_b),
            decoder: a.decoder.into_params()?,
            output_w: a.output_w.into_array()?,
            output_b: Array1::from_vec(a.output_b),
            hidden_dim: a.hidden_dim,
            latent_dim: a.latent_dim,
            window_len: a.window_len,
            num_features: a.num_features,
            seed: a.seed,
        };
        if autoencoder.encoder.input.w.dim() != (a.hidden_dim, a.num_features)
            || autoencoder.decoder.input.w.dim() != (a.hidden_dim, a.latent_dim)
            || autoencoder.output_w.dim() != (a.num_features, a.hidden_dim)
        {
            return Err(Error::Format("stored weight shapes disagree with dims".into()));
        }
        let o = self.ocsvm;
        if o.alpha.len() != o.support_vectors.rows {
            return Err(Error::Format("alpha count disagrees with support vectors".into()));
        }
        let ocsvm = OcsvmModel {
            support_vectors: o.support_vectors.into_array()?,
            alpha: Array1::from_vec(o.alpha),
            rho: o.rho,
            gamma: o.gamma,
        };
        Ok(Detector {
            autoencoder,
            ocsvm,
            residual_mode: self.residual_mode,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<ModelBundle> {
        // Peek at the version first so unknown versions get a clear error
        // rather than a field-mismatch one.
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                probe.format_version
            )));
        }
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ModelBundle> {
        let text = std::fs::read_to_string(path)?;
        ModelBundle::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::init_model;
    use crate::ocsvm::{fit, OcsvmConfig};
    use ndarray::Array2;

    fn sample_detector() -> Detector {
        let autoencoder = init_model(3, 4, 5, 2, 99).unwrap();
        let data = Array2::from_shape_fn((12, 3), |(i, j)| (i as f64 * 0.13 + j as f64 * 0.07).sin().abs());
        let (ocsvm, _) = fit(&data.view(), &OcsvmConfig::default()).unwrap();
        Detector {
            autoencoder,
            ocsvm,
            residual_mode: ResidualMode::Aggregated,
        }
    }

    fn sample_scaler() -> Scaler {
        Scaler {
            minimum: vec![0.0, -1.0, 2.0],
            maximum: vec![1.0, 4.0, 2.0],
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let detector = sample_detector();
        let names = vec!["a".into(), "b".into(), "c".into()];
        let bundle = ModelBundle::new(&detector, &sample_scaler(), &names);
        let json = bundle.to_json().unwrap();
        let loaded = ModelBundle::from_json(&json).unwrap();
        assert_eq!(loaded.feature_names, names);
        assert_eq!(loaded.window_len(), 4);
        let restored = loaded.into_detector().unwrap();
        assert_eq!(restored.autoencoder.to_flat(), detector.autoencoder.to_flat());
        assert_eq!(restored.ocsvm, detector.ocsvm);
        assert_eq!(restored.residual_mode, detector.residual_mode);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let detector = sample_detector();
        let bundle = ModelBundle::new(&detector, &sample_scaler(), &["a".into(), "b".into(), "c".into()]);
        let json = bundle.to_json().unwrap();
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        let err = ModelBundle::from_json(&bumped).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn corrupted_shape_is_rejected() {
        let detector = sample_detector();
        let bundle = ModelBundle::new(&detector, &sample_scaler(), &["a".into(), "b".into(), "c".into()]);
        let mut clone = bundle.clone();
        clone.autoencoder.hidden_dim = 7;
        let json = clone.to_json().unwrap();
        let loaded = ModelBundle::from_json(&json).unwrap();
        assert!(loaded.into_detector().is_err());
    }
}
