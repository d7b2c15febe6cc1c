use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampler diverged at iteration {iter}: {reason}")]
    NonFinite { iter: usize, reason: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("csv error at row {row}, column `{column}`: {reason}")]
    CsvCell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
