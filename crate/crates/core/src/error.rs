use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("age {0} outside the supported range [18, 100]")]
    AgeOutOfRange(f64),

    #[error("risk-factor fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("invalid mortality data: {0}")]
    InvalidMortalityData(String),

    #[error("covariance matrix is not positive semidefinite (pivot {index}: {pivot:e})")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "optimizer did not converge in {iterations} iterations \
         (objective {value}, certificate residual {residual:e})"
    )]
    NotConverged {
        iterations: usize,
        value: f64,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("allocation cannot be normalized: {0}")]
    Internal(String),

    #[error("scenario file {path}: {msg}")]
    ScenarioFile { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
