use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unstable rendering: stiffness {k} N/m exceeds k_max = b/Ts = {k_max} N/m")]
    Stability { k: f64, k_max: f64 },

    #[error("insufficient history: need t >= {needed}, got t = {t}")]
    InsufficientHistory { t: usize, needed: usize },

    #[error("unstable queue: utilization rho = {0} must be < 1")]
    Unstable(f64),

    #[error("unsupported weights schema version {0}")]
    Version(u32),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
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
}

pub type Result<T> = std::result::Result<T, Error>;
