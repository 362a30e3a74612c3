//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. The CLI maps each variant to
//! a stable category token so callers can parse `error: <category>: <detail>`
//! lines without scraping free text.

use std::path::PathBuf;

use thiserror::Error;

/// Unified error for dataset loading, numeric validation, and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row} has {found} fields but the header has {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unrecognized label {token:?} at row {row}; expected 1, 0, faulty, or clean")]
    UnknownLabel { row: usize, token: String },

    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),

    #[error("instance {0:?} has no label")]
    UnlabeledInstance(String),

    #[error("class {0:?} is absent from the training data")]
    MissingClass(String),

    #[error("feature width mismatch: source has {source_width} features, target has {target_width}")]
    FeatureWidthMismatch {
        source_width: usize,
        target_width: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("need at least {needed} instances for {context}, got {got}")]
    TooFewInstances {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{0}")]
    Config(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable category for CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::EmptyDataset(_) => "empty-dataset",
            Error::EmptyBatch(_) => "empty-batch",
            Error::NonNumericCell { .. } => "non-numeric-cell",
            Error::RowWidth { .. } => "row-width",
            Error::UnknownLabel { .. } => "unknown-label",
            Error::MissingLabelColumn(_) => "missing-label-column",
            Error::UnlabeledInstance(_) => "unlabeled-instance",
            Error::MissingClass(_) => "missing-class",
            Error::FeatureWidthMismatch { .. } => "feature-width-mismatch",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::NonFinite(_) => "non-finite",
            Error::TooFewInstances { .. } => "too-few-instances",
            Error::Config(_) => "config",
        }
    }
}
