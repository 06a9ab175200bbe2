use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DrcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DrcError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("timestep {t} out of range 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("both classes must be present")]
    SingleClass,

    #[error("timed out after {0:?} waiting for {1}")]
    Timeout(std::time::Duration, PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample {sample_id}, stage {stage}: {source}")]
    Pipeline {
        sample_id: String,
        stage: &'static str,
        #[source]
        source: Box<DrcError>,
    },
}

impl DrcError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DrcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DrcError::InvalidParameter(msg.into())
    }

    pub(crate) fn at(self, sample_id: &str, stage: &'static str) -> Self {
        DrcError::Pipeline {
            sample_id: sample_id.to_string(),
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the configuration rather than by a pipeline stage.
    pub fn is_config(&self) -> bool {
        matches!(self, DrcError::Config(_))
    }
}
