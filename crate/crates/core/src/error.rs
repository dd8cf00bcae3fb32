use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// [`Error::NonFinite`] is kept separate from the validation variants so that
/// callers (the CLI in particular) can tell numerical failure apart from bad
/// input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    #[error("tree parse error at byte {pos}: {msg}")]
    TreeParse { pos: usize, msg: String },

    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
