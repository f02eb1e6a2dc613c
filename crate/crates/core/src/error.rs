use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters for {family}: {reason}")]
    InvalidParams { family: String, reason: String },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("value {value} outside the support of {family}")]
    Support { family: String, value: f64 },

    /// An iterative estimator hit its iteration cap. `trace` holds the
    /// successive iterates of the quantity being solved for.
    #[error("{what} did not converge after {iterations} iterations")]
    Convergence {
        what: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid block length {l} for a series of length {n}")]
    InvalidBlockLength { l: usize, n: usize },

    #[error("block length selection failed: {0}")]
    Selection(String),

    #[error("{failed} of {replicates} bootstrap replicates failed to fit (limit {limit}); last error: {last}")]
    TooManyFailures {
        failed: usize,
        replicates: usize,
        limit: usize,
        last: String,
    },

    #[error("working AR(1) coefficient {0} is too close to a unit root")]
    NearUnitRoot(f64),

    #[error("undefined Kendall's tau: {0}")]
    UndefinedTau(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// by a failing computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Config(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::InvalidInput(_)
                | Error::InvalidBlockLength { .. }
                | Error::InvalidParams { .. }
                | Error::Domain(_)
        )
    }
}
