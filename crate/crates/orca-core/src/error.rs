use thiserror::Error;

/// Error type shared across the crate.
///
/// The three domain variants map onto distinct CLI exit codes: `Config` for
/// invalid configuration, `Data` for malformed or missing data, and
/// `Divergence` for aborted training runs.
#[derive(Debug, Error)]
pub enum OrcaError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl OrcaError {
    pub fn config(msg: impl Into<String>) -> Self {
        OrcaError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        OrcaError::Data(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, OrcaError>;
