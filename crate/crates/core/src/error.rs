use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("document {id:?} has role {found}, expected {expected}")]
    RoleMismatch {
        id: String,
        expected: String,
        found: String,
    },

    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("requested {requested} topics but matrix rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("provider configuration: {0}")]
    ProviderConfig(String),

    #[error("provider request failed: {0}")]
    Provider(String),

    #[error("could not parse label from response {0:?}")]
    UnparseableResponse(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("category scheme: {0}")]
    Scheme(String),

    #[error("missing rater score for topic {topic_id} from rater {rater_id:?}")]
    MissingScore { topic_id: usize, rater_id: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
