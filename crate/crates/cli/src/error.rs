use std::path::PathBuf;

use thiserror::Error;

/// CLI failures carry the stage (subcommand or file) they came from so a
/// batch log pinpoints the failing step.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: remixtree_core::CoreError,
    },
    #[error("{stage}: {source}")]
    Regression {
        stage: &'static str,
        #[source]
        source: remixtree_countreg::RegressionError,
    },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}

/// Wraps a core-module error with the stage it surfaced in.
pub fn at_stage(stage: &'static str) -> impl Fn(remixtree_core::CoreError) -> CliError {
    move |source| CliError::Core { stage, source }
}

pub fn at_fit_stage(
    stage: &'static str,
) -> impl Fn(remixtree_countreg::RegressionError) -> CliError {
    move |source| CliError::Regression { stage, source }
}
