use thiserror::Error;

/// Errors raised by the geometry pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate chart point: smallest singular value {smallest:e} (all: {singular_values:?})")]
    Degenerate {
        smallest: f64,
        singular_values: Vec<f64>,
    },

    #[error("frame error: {0}")]
    Frame(String),

    #[error("normal frame changes pivot or jumps inside the difference stencil")]
    FrameDiscontinuity,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownEntry(String),

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
