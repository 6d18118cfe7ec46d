use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame length {0} must be a prime >= 5")]
    InvalidFrameLength(usize),
    #[error("index {index} out of range 0..{bound} for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
