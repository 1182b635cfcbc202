use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] seqmargin_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for failed checks and numerical failures, 2 for anything the
    /// caller can fix by changing the invocation or the input.
    pub fn exit_code(&self) -> i32 {
        use seqmargin_core::Error as E;
        match self {
            HarnessError::Usage(_) | HarnessError::Config { .. } => 2,
            HarnessError::Core(
                E::Precondition(_)
                | E::Parse { .. }
                | E::DimensionMismatch { .. }
                | E::Partition(_)
                | E::GuardViolated { .. }
                | E::Generator(_)
                | E::NotSeparable
                | E::Separable
                | E::Io { .. },
            ) => 2,
            HarnessError::Io { .. } => 2,
            HarnessError::Core(_) | HarnessError::ChecksFailed(_) => 1,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
