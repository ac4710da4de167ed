use std::io;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("insufficient keypoints: need at least {required} detected, found {found}")]
    InsufficientKeypoints { required: usize, found: usize },

    #[error("labeling conflict between rows {first} and {second}")]
    LabelConflict { first: String, second: String },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("model is not calibrated")]
    Uncalibrated,

    #[error("batch-norm error: {0}")]
    BatchNorm(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("malformed input on line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for errors caused by bad inputs or configuration rather than a
    /// failure while running.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
