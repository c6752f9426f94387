//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors that were required to have matching shapes did not.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An argument violated an operation's precondition.
    #[error("invalid argument to {op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    /// A loss term evaluated to NaN or infinity; the step was aborted.
    #[error("non-finite loss in term `{term}`: {value}")]
    NonFiniteLoss { term: &'static str, value: f64 },

    /// A gradient contained NaN or infinity; the optimizer refused it.
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    /// Two model bundles that had to be structurally identical were not.
    #[error("bundle structure mismatch at parameter `{param}`: {msg}")]
    StructuralMismatch { param: String, msg: String },

    /// A segment cannot be used (constant signal, too few beats, ...).
    #[error("segment unusable: {0}")]
    UnusableSegment(String),

    /// A text input (record file, config, checkpoint manifest) failed to parse.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Configuration was syntactically valid but semantically rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, arguments, malformed
    /// files) as opposed to failures at run time. The CLI maps the former to
    /// exit code 1 and the latter to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::ShapeMismatch { .. }
                | Error::InvalidArgument { .. }
                | Error::Parse { .. }
                | Error::Config(_)
                | Error::StructuralMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
