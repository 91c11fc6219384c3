use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("elliptic Gamma pole at factor (m={m}, n={n})")]
    GammaPole { m: usize, n: usize },

    #[error("pole: {0}")]
    Pole(String),

    #[error("singular dynamical parameter (P+h)_({j1},{j2}): bracket [s] vanishes")]
    Singular { j1: usize, j2: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("resource cap exceeded: {0}")]
    CapExceeded(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
