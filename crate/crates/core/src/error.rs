use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported array layout: {0}")]
    UnsupportedLayout(String),

    #[error("invalid scene: {field}: {reason}")]
    InvalidScene { field: String, reason: String },

    #[error("underdetermined localization: {0}")]
    Underdetermined(String),

    #[error("triangulation failed: {0}")]
    NoIntersection(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scene(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidScene { field: field.into(), reason: reason.into() }
    }
}
