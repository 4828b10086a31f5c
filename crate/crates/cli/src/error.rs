use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing {artifact} (looked in {path}); run {stage} first")]
    MissingArtifact {
        artifact: &'static str,
        stage: &'static str,
        path: PathBuf,
    },

    #[error("output directory is locked by {0}; if no other run is active, delete the lock file")]
    Locked(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] htmodel::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for a missing
    /// upstream artifact, 4 for provider failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use htmodel::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(E::ProviderConfig(_) | E::Provider(_) | E::UnparseableResponse(_)) => 4,
            _ => 1,
        }
    }
}
