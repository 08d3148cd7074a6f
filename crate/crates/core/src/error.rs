use thiserror::Error;

/// Errors produced by the image-formation, fitting and restoration routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} ({expected_w}x{expected_h} vs {actual_w}x{actual_h})")]
    DimensionMismatch {
        what: &'static str,
        expected_w: usize,
        expected_h: usize,
        actual_w: usize,
        actual_h: usize,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("under-constrained fit: `{parameter}` is not observable ({reason})")]
    UnderConstrained {
        parameter: &'static str,
        reason: String,
    },

    #[error("ambiguous depth: {0}")]
    Ambiguous(String),

    #[error("training diverged at {stage}: {detail}")]
    Divergence { stage: &'static str, detail: String },

    #[error("undefined normalization: {0}")]
    UndefinedNormalization(String),

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
