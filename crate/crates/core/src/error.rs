use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty clip")]
    EmptyClip,
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("null mel bins: {n_mels} mel filters cannot be placed on {n_bins} spectral bins")]
    NullMelBins { n_mels: usize, n_bins: usize },
    #[error("clip too short: {len} samples, need at least {need}")]
    ClipTooShort { len: usize, need: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("patch size mismatch: {dims:?} is not divisible by {patch:?}")]
    PatchSizeMismatch {
        dims: (usize, usize),
        patch: (usize, usize),
    },
    #[error("invalid ratio {value}: {reason}")]
    InvalidRatio { value: f64, reason: &'static str },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("diverged at step {step}: non-finite {what}")]
    Diverged { step: u64, what: &'static str },
    #[error("incompatible pretraining: {0}")]
    IncompatiblePretraining(String),
    #[error("empty set: {0}")]
    EmptySet(&'static str),
    #[error("invalid group count: k={k} for {n} items")]
    InvalidGroupCount { k: usize, n: usize },
    #[error("missing class {0} in training set")]
    MissingClass(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("io error on {path}: {source}")]
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
