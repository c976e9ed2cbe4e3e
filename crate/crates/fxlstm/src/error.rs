use std::path::PathBuf;

use fxlstm_core::dse::DseError;
use fxlstm_core::net::{ModelError, NetError};
use fxlstm_core::sim::SimError;

/// Process exit codes; 2 is also what clap uses for bad arguments.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const SCHEMA: i32 = 3;
    pub const PROTOCOL: i32 = 4;
    pub const IO: i32 = 5;
    pub const MISMATCH: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {msg}", location(path, *line))]
    Schema {
        path: PathBuf,
        line: Option<u64>,
        msg: String,
    },
    #[error("{0}")]
    Protocol(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Mismatch(String),
}

fn location(path: &std::path::Path, line: Option<u64>) -> String {
    match line {
        Some(l) => format!("{}:{l}", path.display()),
        None => path.display().to_string(),
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => exit::USAGE,
            Error::Schema { .. } => exit::SCHEMA,
            Error::Protocol(_) => exit::PROTOCOL,
            Error::Io { .. } => exit::IO,
            Error::Mismatch(_) => exit::MISMATCH,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, line: Option<u64>, msg: impl ToString) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            msg: msg.to_string(),
        }
    }
}

impl From<SimError> for Error {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Protocol(_) => Error::Protocol(e.to_string()),
            SimError::Image(_) | SimError::Model(_) | SimError::Shape { .. } => Error::schema("<input>", None, e),
            SimError::Address { .. } | SimError::Unsupported(_) => Error::Usage(e.to_string()),
        }
    }
}

impl From<NetError> for Error {
    fn from(e: NetError) -> Self {
        Error::schema("<input>", None, e)
    }
}

impl From<ModelError> for Error {
    fn from(e: ModelError) -> Self {
        Error::schema("<model>", None, e)
    }
}

impl From<DseError> for Error {
    fn from(e: DseError) -> Self {
        match e {
            DseError::Sim(s) => s.into(),
            DseError::Net(n) => n.into(),
            other => Error::Usage(other.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
