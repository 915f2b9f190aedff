use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QkdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QkdError {
    /// A numeric argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A statistical estimate could not be formed from the available counts.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The decoy-state bounds produced a non-positive single-photon yield.
    #[error("decoy estimation failed: {0}")]
    DecoyFailed(String),

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QkdError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        QkdError::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        QkdError::Config(msg.into())
    }

    /// Process exit code used by the command line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QkdError::Config(_) => 2,
            QkdError::Domain(_) | QkdError::Estimation(_) | QkdError::DecoyFailed(_) => 3,
            QkdError::Io { .. } => 1,
        }
    }
}
