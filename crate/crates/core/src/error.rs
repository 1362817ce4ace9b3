use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer} ({kind}): {detail}")]
    LayerShape {
        layer: usize,
        kind: String,
        detail: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what}: expected length {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("no recorded computation graph; call forward before backward")]
    MissingGraph,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("unsupported architecture: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("conflict ratio must lie strictly between 0 and 1, got {0}")]
    ConflictRatio(f64),

    #[error("unknown preset `{name}`; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("fingerprint mismatch: expected {expected}, found {found}; rebuild the embeddings/cache")]
    Fingerprint { expected: String, found: String },

    #[error("empty sample subset")]
    EmptySubset,

    #[error("subset mixes class labels {0} and {1}")]
    MixedClasses(usize, usize),

    #[error("indices {0} and {1} fall in different cache shards")]
    CrossShard(usize, usize),

    #[error("index {index} out of range for {len} samples")]
    Index { index: usize, len: usize },

    #[error("density must be strictly positive, found {0} at position {1}")]
    Density(f64, usize),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{what} not found at {path}; {hint}")]
    Missing {
        what: &'static str,
        path: PathBuf,
        hint: &'static str,
    },

    #[error("image export: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by non-finite or otherwise broken numerics.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Density(..))
    }
}
