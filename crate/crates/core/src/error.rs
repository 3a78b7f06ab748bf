use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Exact enumeration requested beyond the supported system size.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("eigensolver did not converge after {matvecs} matrix applications (residual {residual:.3e})")]
    Convergence { residual: f64, matvecs: usize },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("infeasible mask constraints: {0}")]
    Constraint(String),

    #[error("relative error undefined for reference value 0")]
    UndefinedRelativeError,

    #[error("occurrence ratio undefined: no configuration pair with both counts > 0")]
    UndefinedRatio,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("aggregation failed for {offenders:?}: {message}")]
    Aggregation {
        message: String,
        offenders: Vec<String>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage, 2 numeric failure, 3 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence { .. }
            | Error::TrainingDiverged { .. }
            | Error::Numeric(_)
            | Error::UndefinedRelativeError
            | Error::UndefinedRatio => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Aggregation { .. } => 3,
            _ => 1,
        }
    }
}
