use thiserror::Error;

/// Errors raised by model construction, chain assembly and pricing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{function} is undefined at {value}")]
    Domain { function: &'static str, value: f64 },

    #[error(
        "negative rate {value:e} in {matrix} at row {row}; \
         roughly {suggested_nodes} nodes would be needed, or use the upwind policy"
    )]
    NegativeRate {
        matrix: String,
        row: usize,
        value: f64,
        suggested_nodes: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures caused by inputs rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::InvalidParameter { .. } | Error::Shape(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
