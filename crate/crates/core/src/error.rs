use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {found}")]
    Shape {
        context: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value in {context} at index {index:?}")]
    NonFinite { context: String, index: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("negative entry {value} at ({row}, {col}); input must be non-negative")]
    Negative { row: usize, col: usize, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("class {class} has {found} member embeddings, at least {required} required")]
    UnderPopulated {
        class: usize,
        found: usize,
        required: usize,
    },

    #[error("method `{method}` cannot be applied: {reason}")]
    Incompatible { method: String, reason: String },

    #[error("inconsistent explanation: {0}")]
    Consistency(String),

    #[error("training produced a non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("metric `{metric}` is not applicable to {task} tasks")]
    NotApplicable { metric: String, task: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("validation failed: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        found: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Whether the error stems from user-supplied input rather than an
    /// internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Consistency(_) | Error::NonFiniteLoss { .. } | Error::State(_)
        )
    }
}
