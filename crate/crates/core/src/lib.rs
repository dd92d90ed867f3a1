//! Simulation of a Sagnac-loop polarization-entangled photon-pair source
//! with gated single-photon detection.

pub mod cli;
pub mod config;
pub mod detection;
pub mod metrics;
pub mod polarization;
pub mod runner;
pub mod sagnac;
pub mod source;
pub mod stream;

use detection::DetectionError;
use metrics::MetricsError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Loop(#[from] sagnac::LoopError),
    #[error(transparent)]
    Source(#[from] source::SourceError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 2 for bad configuration, 3 for runs that cannot
    /// produce a result, 1 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Loop(_) | Error::Source(_) => 2,
            Error::Detection(DetectionError::EmptyRun) => 3,
            Error::Detection(DetectionError::Config(_)) => 2,
            Error::Metrics(m) => match m {
                MetricsError::Detection(DetectionError::EmptyRun)
                | MetricsError::IllPosedFit(_)
                | MetricsError::UndefinedCar { .. }
                | MetricsError::GateMismatch(_) => 3,
                MetricsError::Detection(DetectionError::Config(_))
                | MetricsError::Source(_)
                | MetricsError::InvalidSweep(_) => 2,
            },
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}
