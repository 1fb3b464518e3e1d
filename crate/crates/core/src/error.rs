use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or structural preconditions do not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Input files could not be parsed.
    #[error("ingestion error at {path}:{line}: {message}")]
    Ingestion {
        path: String,
        line: usize,
        message: String,
    },

    /// A configuration key is unknown or its value does not parse.
    #[error("config error for key {key:?}: {message}")]
    Config { key: String, message: String },

    /// Training diverged; carries the epoch and the last loss record.
    #[error("training collapsed at epoch {epoch}: {detail}")]
    Collapse { epoch: usize, detail: String },

    /// Internal invariant failure (e.g. a bisection bracket that should exist).
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)*) => {
        // Negated so that NaN operands fail the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)*)));
        }
    };
}
pub(crate) use ensure;
