use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("value {value} outside valid range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("root finding did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid camera model: {0}")]
    InvalidModel(String),

    #[error("invalid grid spec: {0}")]
    InvalidGrid(String),

    #[error("degenerate point: norm {norm:e} m is below 1e-9")]
    DegeneratePoint { norm: f64 },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("cross index {index} out of range for {len} polar cells")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("feature plane has no valid pixels")]
    EmptyValidRegion,

    #[error("no supervised voxels (all invalid or ignored)")]
    NoSupervisedVoxels,

    #[error("unknown fixture preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

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
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by files or arguments rather than by the computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Format { .. } | Error::InvalidArgument(_) | Error::UnknownPreset(_)
        )
    }
}
