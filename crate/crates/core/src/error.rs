use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("design matrix is rank deficient (smallest/largest singular value = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("candidate has no variation left after partialling out the conditioning set")]
    DegenerateRegressor,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {needed} columns, got {got}")]
    InsufficientColumns { needed: usize, got: usize },

    #[error("need at least {needed} rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("index {index} out of range for {n} candidates")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no rows left after dropping incomplete observations")]
    EmptyAfterFiltering,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
