use thiserror::Error;

/// Errors raised by the simulation engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Fano factor requested for a field with zero mean occupation.
    #[error("Fano factor undefined: mean photon number is zero")]
    UndefinedFano,

    #[error("block dimension {dim} (E = {block}) exceeds the hard bound {limit}")]
    MemoryBound { block: u32, dim: usize, limit: usize },

    #[error("eigensolver failed to converge for block E = {block} after {iterations} iterations")]
    NoConvergence { block: u32, iterations: usize },

    #[error("eigen data missing for block E = {0}")]
    MissingBlock(u32),

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cubic has complex roots (discriminant {discriminant:e}); inputs are unphysical")]
    ComplexRoots { discriminant: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("cache format: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that stem from a bad configuration rather than a
    /// numerical failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidInput(_) | Error::Json(_) | Error::MemoryBound { .. }
        )
    }
}
