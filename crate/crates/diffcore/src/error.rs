use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("shape error in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFinite(String),
}

impl DiffError {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        DiffError::Shape { op, detail }
    }
}
