use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or inputs, detected before any stage runs.
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: mvprop_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Stage { .. } | CliError::Output { .. } => 1,
        }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(mvprop_core::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub fn output(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Output { path, source }
    }
}
