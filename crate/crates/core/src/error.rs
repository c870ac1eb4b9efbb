use std::path::PathBuf;

use thiserror::Error;

use crate::problem::SceneState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A problem (or a file describing one) failed validation.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("non-finite gradient entry at parameter {index}")]
    NonFiniteGradient { index: usize },

    /// The objective became non-finite. Carries the last state whose loss was finite.
    #[error("optimization diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last_finite: Box<SceneState>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } | Error::Degenerate(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
