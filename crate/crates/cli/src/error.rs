use std::path::PathBuf;

use crowdmix_core::{ArchiveError, BehaviorId, BlockId, RemixError, ReplayError};
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const ASSERTION_FAILED: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const UNKNOWN_REFERENCE: i32 = 3;
    pub const NOT_COMPILED: i32 = 4;
    pub const IO: i32 = 5;
    pub const REPLAY: i32 = 6;
    pub const SERVE: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Remix { line: usize, source: RemixError },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("unknown behavior {0}")]
    UnknownBehavior(BehaviorId),
    #[error("behavior {0} is not compiled")]
    NotCompiled(BehaviorId),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Load { path: PathBuf, source: ArchiveError },
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("{0} assertion(s) failed")]
    AssertionsFailed(usize),
    #[error("server: {0}")]
    Serve(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Remix { .. } | CliError::Scenario(_) => exit::PARSE,
            CliError::UnknownBlock(_) | CliError::UnknownBehavior(_) => exit::UNKNOWN_REFERENCE,
            CliError::NotCompiled(_) => exit::NOT_COMPILED,
            CliError::Io { .. } | CliError::Load { .. } => exit::IO,
            CliError::Replay(_) => exit::REPLAY,
            CliError::AssertionsFailed(_) => exit::ASSERTION_FAILED,
            CliError::Serve(_) => exit::SERVE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn load(path: impl Into<PathBuf>) -> impl FnOnce(ArchiveError) -> Self {
        let path = path.into();
        move |source| CliError::Load { path, source }
    }
}
