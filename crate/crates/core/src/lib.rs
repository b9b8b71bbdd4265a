//! Explainable anomaly detection for multivariate ICS telemetry.
//!
//! The method: overlapping sliding windows of a scaled time series are fed to
//! an LSTM autoencoder trained on normal traffic; reconstruction residuals go
//! to a nu-one-class SVM that issues the normal/anomaly verdict; detected
//! anomalies are attributed to input cells with a gradient-based Shapley
//! estimator validated against an exact enumeration oracle.
//!
//! Modules follow the processing order: [`ingest`] parses and windows the
//! data, [`autoencoder`] reconstructs it, [`ocsvm`] classifies residuals,
//! [`explain`] attributes scores, [`pipeline`] wires the stages together and
//! evaluates them, [`persist`] and [`export`] read and write artifacts, and
//! [`synthetic`] generates the seeded benchmark process.

pub mod autoencoder;
pub mod error;
pub mod explain;
pub mod export;
pub mod ingest;
pub mod ocsvm;
pub mod persist;
pub mod pipeline;
pub mod seeds;
pub mod synthetic;

pub use error::{Error, Result};
