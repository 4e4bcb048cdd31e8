use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("budget exceeded: {what} (limit {limit})")]
    Budget { what: String, limit: u64 },

    #[error("variable mismatch: {0}")]
    VariableMismatch(String),

    #[error("iteration budget of {0} steps exhausted before certification")]
    NotCertified(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("not postcritically finite at the given tolerance: {0}")]
    NotPcf(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn budget(what: impl Into<String>, limit: u64) -> Self {
        Error::Budget {
            what: what.into(),
            limit,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
