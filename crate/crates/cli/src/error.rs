use std::path::{Path, PathBuf};

use facegrowth_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results file {}: {reason}", path.display())]
    Results { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> PipelineError {
        move |source| PipelineError::Stage { stage, source }
    }

    /// 1 for problems with the configuration or the input's shape, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Results { .. } => 1,
            PipelineError::Stage { source, .. } => match source {
                CoreError::InvalidConfig(_) | CoreError::BadHeader { .. } | CoreError::Schema(_) => 1,
                _ => 2,
            },
            PipelineError::Io { .. } => 2,
        }
    }

    pub fn stage_name(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Stage { stage, .. } => stage,
            PipelineError::Io { .. } => "io",
            PipelineError::Results { .. } => "report",
        }
    }
}
