use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The grid cannot represent the requested field to the required accuracy.
    #[error("insufficient resolution: {0}")]
    Resolution(String),

    /// Two operands live on different grids or in different spaces.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A coupling matrix or weight vector does not belong to the basis it is used with.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// Input weights are not a probability distribution.
    #[error("weights are not normalized: sum = {0}")]
    Unnormalized(f64),

    /// A dense decomposition failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by files rather than numbers.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}
