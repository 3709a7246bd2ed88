use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the navigation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("index {index} out of range for episode of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("episode is not finalized")]
    NotFinalized,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate action: {0}")]
    DegenerateAction(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("policy evaluation does not terminate: {0}")]
    NonTerminating(String),

    #[error("scenario generation failed after {attempts} attempts: {reason}")]
    Infeasible { attempts: usize, reason: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: u64, detail: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("empty image")]
    EmptyImage,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(value: f64, what: &'static str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
