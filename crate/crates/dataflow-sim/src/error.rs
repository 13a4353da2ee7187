use std::path::PathBuf;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of a model function.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// Model, grid or scenario settings are inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A configuration file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// An explicit step produced negative mass beyond round-off.
    #[error("unstable step at t = {t}: {detail}")]
    Stability { t: f64, detail: String },

    /// The macroscopic solver blew up.
    #[error("solver diverged at step {step} (t = {t}): {detail}")]
    Divergence { step: u64, t: f64, detail: String },

    /// Data reached the top of the stage axis, outside the model's validity.
    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
