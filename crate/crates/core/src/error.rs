use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image dimension {actual} is smaller than required minimum {min} ({what})")]
    DimensionTooSmall { what: &'static str, actual: usize, min: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("crop of {crop} pixels does not fit in {available} available pixels")]
    CropTooLarge { crop: usize, available: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("unsupported scale factor {0}; expected 2, 3 or 4")]
    UnsupportedScale(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("requested {requested} filters but the layer has only {available} channels")]
    TooManyFilters { requested: usize, available: usize },

    #[error("requested top-{requested} per filter but the index stores only {stored}")]
    KExceedsStore { requested: usize, stored: usize },

    #[error("extractor fingerprint mismatch: index built with {expected}, queried with {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("correlation undefined: both filters are constant")]
    UndefinedCorrelation,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("corpus has {available} images but {required} are required")]
    CorpusTooSmall { required: usize, available: usize },

    #[error("unknown image id `{0}`")]
    UnknownImage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Compatibility,
    Divergence,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::FingerprintMismatch { .. } | Error::ArchitectureMismatch(_) => {
                ErrorCategory::Compatibility
            }
            Error::Divergence { .. } => ErrorCategory::Divergence,
            _ => ErrorCategory::Input,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}
