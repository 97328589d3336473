use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the harmonization pipeline.
#[derive(Debug, Error)]
pub enum HarpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("deconvolution is singular: {0}")]
    DeconvolutionSingular(String),

    #[error("training set is empty after voxel selection")]
    TrainingSetEmpty,

    #[error(
        "loss became non-finite at iteration {iteration} (last finite loss {last_finite_loss:e})"
    )]
    NonFiniteLoss {
        iteration: usize,
        last_finite_loss: f64,
    },

    #[error("percentage difference is undefined: baseline standard error is zero")]
    UndefinedBaseline,

    #[error("weighted DICE is undefined: both maps are all-zero")]
    UndefinedOverlap,

    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("model lmax {model_lmax} ({model_coeffs} coefficients) does not match volume lmax {volume_lmax} ({volume_coeffs} coefficients)")]
    ModelMismatch {
        model_lmax: usize,
        model_coeffs: usize,
        volume_lmax: usize,
        volume_coeffs: usize,
    },

    #[error("unsupported encoding in {path}: {message}")]
    UnsupportedEncoding { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl HarpError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        HarpError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        offset: u64,
        message: impl Into<String>,
    ) -> Self {
        HarpError::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarpError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            HarpError::Format { .. }
                | HarpError::UnsupportedEncoding { .. }
                | HarpError::Json { .. }
                | HarpError::ModelMismatch { .. }
        )
    }

    /// True for errors raised by a numerical procedure rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HarpError::IllPosed(_)
                | HarpError::DeconvolutionSingular(_)
                | HarpError::NonFiniteLoss { .. }
                | HarpError::UndefinedBaseline
                | HarpError::UndefinedOverlap
                | HarpError::TrainingSetEmpty
        )
    }
}

pub type Result<T> = std::result::Result<T, HarpError>;
