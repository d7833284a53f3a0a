use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("antenna index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("theta quadrature did not converge for (di={di}, dj={dj}, k={k}): panel refinement changed the value by {change:e}")]
    Quadrature { di: i64, dj: i64, k: i64, change: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dynamic RS-LS needs at least one tracked block; use plain RS-LS for the first block")]
    NoTrackedBlocks,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Attaches a location (trial, block, file, ...) to an error.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 for validation, configuration and I/O problems,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Quadrature { .. } | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}
