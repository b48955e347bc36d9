use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("orientation violation: det = {det:e} (must be > 0)")]
    OrientationViolation { det: f64 },

    #[error("unknown pattern id `{0}`")]
    UnknownPattern(String),

    #[error("infeasible state: {0}")]
    Infeasible(String),

    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
