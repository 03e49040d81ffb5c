use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("invalid probability matrix: {0}")]
    InvalidProbability(String),

    #[error("{context} diverged after {iterations} iterations (last objective values: {trace:?})")]
    Diverged {
        context: &'static str,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("cannot parse `{value}` as a number at row {row}, column `{column}`")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("CSV file has no data rows")]
    EmptyFile,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::ShapeMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
