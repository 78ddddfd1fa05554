use std::path::PathBuf;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("motion is not invertible at t = {t}")]
    SingularMotion { t: f64 },

    #[error("grid too coarse for the domain: {0}")]
    GridConfiguration(String),

    #[error("degenerate ghost geometry at node {node}")]
    DegenerateGhost { node: usize },

    #[error("solver became unstable at node {node} in step {step} (check the CFL time step)")]
    Instability { node: usize, step: usize },

    #[error("dimension mismatch: {0}")]
    Mismatch(String),

    #[error("malformed {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("missing input {0}")]
    MissingInput(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::GridConfiguration(_) => 2,
            Error::Io { .. } | Error::MissingInput(_) | Error::Format { .. } => 3,
            Error::Instability { .. } | Error::SingularMotion { .. } | Error::DegenerateGhost { .. } => 4,
            Error::Mismatch(_) => 5,
        }
    }
}
