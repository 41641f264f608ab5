use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("class {class} has {count} samples, need at least {required}")]
    InsufficientClassSamples {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("data error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("uncertainty set is empty")]
    EmptyUncertaintySet,

    #[error("linear program error: {0}")]
    Lp(#[from] LpError),

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

/// Errors raised by the simplex solver on malformed input or runaway iteration.
///
/// Infeasibility and unboundedness are not errors; they are reported through
/// [`crate::lp::LpStatus`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("problem too large for the dense tableau ({rows} rows x {cols} columns)")]
    TooLarge { rows: usize, cols: usize },

    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

impl From<std::io::Error> for LpcError {
    fn from(e: std::io::Error) -> Self {
        LpcError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LpcError {
    fn from(e: serde_json::Error) -> Self {
        LpcError::Serialization(e.to_string())
    }
}

pub type Result<T, E = LpcError> = std::result::Result<T, E>;
