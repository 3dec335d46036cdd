use thiserror::Error;

/// Errors surfaced by the command line, each with a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Io(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: qdiff_core::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::MissingArtifact(_) => 4,
            CliError::Stage { source, .. } if source.is_io() => 4,
            CliError::Stage { .. } => 3,
        }
    }

    pub(crate) fn stage(stage: &'static str) -> impl Fn(qdiff_core::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }
}
