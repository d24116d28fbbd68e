use std::path::PathBuf;

/// Errors produced by the analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch at layer {layer}: expected {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("label {label} of sample {index} is out of range for {classes} classes")]
    InvalidLabel {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("skeleton weight at layer {layer} ({row}, {col}) is zero")]
    ZeroSkeletonWeight { layer: usize, row: usize, col: usize },

    #[error("singular reconstruction: basis path value {index} is zero")]
    SingularReconstruction { index: usize },

    #[error("singular projection: {0}")]
    SingularProjection(String),

    #[error("scaling factor {value} for hidden node {index} is not a positive finite number")]
    InvalidScaling { index: usize, value: f64 },

    #[error("path count {count} exceeds the cap of {cap}")]
    PathCapExceeded { count: u128, cap: u128 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all {0} evaluations failed")]
    AllSamplesFailed(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("incompatible checkpoint version {found} (expected {expected})")]
    IncompatibleVersion { found: u64, expected: u64 },

    #[error("{path}:{line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
