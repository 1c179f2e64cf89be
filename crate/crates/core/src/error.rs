use thiserror::Error;

/// Errors produced by model fitting, inference, and data handling.
#[derive(Debug, Error)]
pub enum MilError {
    #[error("invalid label {label}: labels must lie in 1..={t}")]
    InvalidLabel { label: u32, t: u32 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data for {context}: got {got} samples, need at least {need}")]
    InsufficientData {
        context: String,
        got: usize,
        need: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("EM iteration {iteration}: {source}")]
    EmIteration {
        iteration: usize,
        #[source]
        source: Box<MilError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MilError {
    /// True when the error (possibly wrapped by the EM loop) signals that a
    /// component had too few samples to fit. The evaluation harness treats
    /// such folds as degenerate rather than aborting a whole run.
    pub fn is_insufficient_data(&self) -> bool {
        match self {
            MilError::InsufficientData { .. } => true,
            MilError::EmIteration { source, .. } => source.is_insufficient_data(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, MilError>;
