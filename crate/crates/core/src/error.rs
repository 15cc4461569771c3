use alloc::string::String;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {context} (sample {sample})")]
    NonFinite { context: &'static str, sample: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("incompatible checkpoint store: {0}")]
    Incompatible(String),
    #[error("corrupt checkpoint store: {0}")]
    Corrupt(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }
}
