use thiserror::Error;

/// Every fallible operation in the crate returns this error type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cube is not aligned with the grid: {0}")]
    Alignment(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("truncation below one cell: {0}")]
    Truncation(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("rotation search failed: best score {0:e}")]
    SearchFailure(f64),
    #[error("point lies on a grid boundary: {0}")]
    BoundaryAmbiguity(String),
    #[error("scale out of range: {0}")]
    Scale(String),
    #[error("recursion depth exceeded: {0}")]
    Depth(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("mode error: {0}")]
    Mode(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
