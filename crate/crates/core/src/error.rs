use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },

    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record store is empty")]
    EmptyStore,

    #[error("stratum {stratum}: only {found} qualifying vessels (need at least {required})")]
    InsufficientVessels {
        stratum: String,
        found: usize,
        required: usize,
    },

    #[error("query cannot be resolved, missing: {}", .missing.join(", "))]
    UnresolvableQuery { missing: Vec<String> },

    #[error("duplicate pair reference {0}")]
    DuplicateLabel(usize),

    #[error("stage `{stage}` requires `{requires}` to have run first (missing {path})")]
    MissingStage {
        stage: &'static str,
        requires: &'static str,
        path: PathBuf,
    },

    #[error("upstream service: {0}")]
    Upstream(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn field(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Field {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 data, 3 upstream service.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::MissingStage { .. } => 1,
            Error::Upstream(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
