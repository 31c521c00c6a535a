use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("adapter `{adapter}` failed: {detail}")]
    Adapter { adapter: String, detail: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("feature config mismatch: model expects {expected}, featurizer provides {actual}")]
    FeatureMismatch { expected: String, actual: String },

    #[error("invalid session state: {0}")]
    InvalidState(String),

    #[error("response pool rejected: {0}")]
    PoolLint(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("stage-2 fine-tuning requires a stage-1 checkpoint: {0}")]
    MissingStage1(String),
}

impl Error {
    pub(crate) fn adapter(adapter: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Adapter {
            adapter: adapter.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
