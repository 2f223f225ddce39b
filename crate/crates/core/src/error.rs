use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{column}` has zero variance and cannot be standardized")]
    DegenerateColumn { column: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("labels contain a single class; both classes are required")]
    DegenerateLabels,

    #[error("treatment arm `{arm}` has {size} units, need at least {required}")]
    InsufficientArm {
        arm: &'static str,
        size: usize,
        required: usize,
    },

    #[error("all shift weights are zero; no resampling distribution exists")]
    AllZeroWeights,

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown config key `{key}` on line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: u64, message: String },

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
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::UnknownKey { .. })
    }
}
