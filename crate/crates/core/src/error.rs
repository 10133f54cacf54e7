use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("device {id}: non-finite state ({detail})")]
    StateCorruption { id: u32, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("duplicate device id {0}")]
    DuplicateDevice(u32),

    #[error("unknown device id {0}")]
    UnknownDevice(u32),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(csv::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if !e.is_io_error() {
            return Error::Csv(e);
        }
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("checked is_io_error"),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
