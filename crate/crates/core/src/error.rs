use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("CSV header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("row {row}, column `{column}`: label {value} outside [0, {cardinality})")]
    LabelOutOfRange {
        row: usize,
        column: String,
        value: i64,
        cardinality: usize,
    },

    #[error("row {row}, column `{column}`: cannot parse `{text}` as {expected}")]
    BadCell {
        row: usize,
        column: String,
        text: String,
        expected: &'static str,
    },

    #[error("row {row}, column `{column}`: non-finite latent value")]
    NonFiniteLatent { row: usize, column: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("joint alphabet of {cells} cells exceeds the cap of {cap}")]
    AlphabetOverflow { cells: u128, cap: u128 },

    #[error("{factors} factors cannot be aligned injectively to {neurons} neurons")]
    TooFewNeurons { factors: usize, neurons: usize },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("labels contain a single class; a probe needs at least two")]
    SingleClass,

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("factor {factor} has zero entropy")]
    ZeroEntropy { factor: usize },

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the filesystem rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
