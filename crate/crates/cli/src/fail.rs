use std::fmt;

use vosa_core::Error;

/// Process exit status of a failed run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Config = 2,
    Data = 3,
    Internal = 4,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Failure>;

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Config,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Data,
            message: msg.into(),
        }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Self {
            exit: Exit::Internal,
            message: msg.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Io { .. }
            | Error::Parse(_)
            | Error::BadMagic { .. }
            | Error::Truncated(_)
            | Error::CountMismatch { .. }
            | Error::MalformedRow { .. }
            | Error::InsufficientRows { .. }
            | Error::MissingLevel(_)
            | Error::NegativeVariance { .. }
            | Error::UnknownVoltage(_)
            | Error::Dimension(_)
            | Error::Range(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::OversizedWord { .. }
            | Error::UnsupportedMetric(_) => Exit::Data,
            Error::InvalidParameter(_) | Error::Domain(_) | Error::CodeOverflow { .. } => {
                Exit::Config
            }
            _ => Exit::Internal,
        };
        Self {
            exit,
            message: e.to_string(),
        }
    }
}

/// Attach context to a core error while keeping its exit class.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T>;
}

impl<T, E: Into<Failure>> Context<T> for std::result::Result<T, E> {
    fn context(self, what: impl fmt::Display) -> Result<T> {
        self.map_err(|e| {
            let mut f = e.into();
            f.message = format!("{what}: {}", f.message);
            f
        })
    }
}
