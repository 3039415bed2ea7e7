use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent shapes or an ill-formed graph. `node` is the graph node index when one applies.
    #[error("shape error at node {node:?} ({op}): {detail}")]
    Shape {
        node: Option<usize>,
        op: &'static str,
        detail: String,
    },

    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("leaf `{0}` is not bound")]
    Unbound(String),

    #[error("gradient root must be 1x1, found {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Training produced a non-finite loss; carries the step at which it happened.
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            node: None,
            op,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
