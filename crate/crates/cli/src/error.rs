//! Command errors carrying their process exit code:
//! 1 usage, 2 data/config, 3 failed verification check.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::CheckFailed(_) => 3,
        }
    }

    pub fn data(err: impl std::fmt::Display) -> Self {
        CmdError::Data(err.to_string())
    }
}

impl From<gapnet_core::CoreError> for CmdError {
    fn from(err: gapnet_core::CoreError) -> Self {
        CmdError::Data(err.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        CmdError::Data(err.to_string())
    }
}
