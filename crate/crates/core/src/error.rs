use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("observation {0} is not covered by the partition")]
    NotCovered(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("NaN encountered in {0}")]
    NotANumber(&'static str),
    #[error("no disagreeing pair in the history window")]
    NoDisagreement,
    #[error("enumeration exceeded {0} leaves")]
    TooManyLeaves(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
