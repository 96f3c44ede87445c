use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation stack.
#[derive(Debug, Error)]
pub enum TclError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("treatment not binary at row {row} (value {value})")]
    TreatmentNotBinary { row: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("degenerate {domain} domain: {reason}")]
    DegenerateDomain { domain: String, reason: String },

    #[error("empty {arm} arm in {domain} domain")]
    EmptyArm { arm: String, domain: String },

    #[error("linear index {index} at row {row} is outside the link domain")]
    LinkDomain { row: usize, index: f64 },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("every lambda produced a degenerate score: {0}")]
    DegenerateSelection(String),

    #[error("{failed} of {trials} bootstrap trials failed: {reasons}")]
    TooManyFailures {
        failed: usize,
        trials: usize,
        reasons: String,
    },
}

impl TclError {
    /// Whether the error stems from numerical trouble rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TclError::LinkDomain { .. }
                | TclError::Objective(_)
                | TclError::DegenerateSelection(_)
                | TclError::TooManyFailures { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, TclError>;
