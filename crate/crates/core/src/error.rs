use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model indices must be nonempty, strictly increasing: {0:?}")]
    InvalidModel(Vec<usize>),

    #[error("singular model: pivot {pivot:.3e} at or below threshold {threshold:.3e}")]
    SingularModel { pivot: f64, threshold: f64 },

    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (gradient sup-norm {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },

    #[error("model count overflows 128-bit integers (p = {p}, k = {k})")]
    CountOverflow { p: usize, k: usize },

    #[error("non-finite entry encountered")]
    NonFinite,

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
