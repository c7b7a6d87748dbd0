use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("singular matrix in {op}: {detail}")]
    Singular { op: &'static str, detail: String },

    #[error("value out of domain in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("search space too large: {size} candidates exceeds limit of {limit}")]
    Capacity { size: f64, limit: f64 },

    #[error("invalid hardware configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn singular(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Singular {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}
