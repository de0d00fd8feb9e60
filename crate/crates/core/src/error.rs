use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate series `{0}`")]
    DuplicateSeries(String),

    #[error("domain error at index {index}: {message}")]
    Domain { index: usize, message: String },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("series `{0}` is constant and cannot be standardized")]
    ConstantSeries(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure stems from bad input rather than a defect or
    /// numerical breakdown inside the library.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Linalg(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
