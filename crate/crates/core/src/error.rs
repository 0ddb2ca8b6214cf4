use thiserror::Error;

/// Errors produced by the array-memory pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Green's tensor evaluated at coincident points")]
    SingularPoint,

    #[error("atoms {first} and {second} are closer than {min_separation:e}")]
    SingularGeometry {
        first: usize,
        second: usize,
        min_separation: f64,
    },

    #[error("interaction matrix is not symmetric (max |M - M^T| = {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("near-defective spectrum: modes {indices:?} have vanishing bilinear norm")]
    DefectiveSpectrum { indices: Vec<usize> },

    #[error("spectral invariants violated: {0}")]
    SpectralInvariant(Box<crate::spectral::SpectralDiagnostics>),

    #[error("vanishing pair denominator between modes {first} and {second} (|lambda - lambda'*| = {magnitude:e})")]
    SingularPair {
        first: usize,
        second: usize,
        magnitude: f64,
    },

    #[error("numerical failure in {context}: achieved error estimate {estimate:e}")]
    Numerical { context: String, estimate: f64 },

    #[error("overlap integral not converged at truncation radius {radius} (tail estimate {tail:e})")]
    Truncation { radius: f64, tail: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("fit window is empty: {0}")]
    FitWindow(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_))
    }
}
