use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("corpus not found: {0}")]
    CorpusNotFound(PathBuf),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed meta.json: {0}")]
    Meta(String),
    #[error("malformed tokens.tsv at line {line}: {reason}")]
    Tokens { line: usize, reason: String },
    #[error("binary size mismatch: expected {expected} bytes, found {found}")]
    BinarySizeMismatch { expected: u64, found: u64 },
    #[error("non-finite value in vector of record {index}")]
    NonFinite { index: usize },
    #[error("duplicate record key (layer {layer}, sentence {sentence_id}, position {position})")]
    DuplicateKey {
        layer: u32,
        sentence_id: u64,
        position: u32,
    },
    #[error("corpus layout: {0}")]
    Layout(String),
    #[error("layer {0} not present in corpus")]
    LayerAbsent(u32),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    /// A token that cannot contribute to self-similarity. Callers aggregating
    /// over token types skip these instead of failing.
    #[error("token {token:?} does not qualify: {reason}")]
    Unqualified { token: String, reason: String },
    #[error("sample of {requested} exceeds the {available} available")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("dominance undefined: total contribution {0} is not positive")]
    DominanceUndefined(f64),
    #[error("zero variance in correlation input")]
    ZeroVariance,
    #[error("k = {k} must be below the dimension {dim}")]
    KOutOfRange { k: usize, dim: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        /// Checkpoints recorded before the failure.
        trajectory: Box<crate::lab::TrainTrajectory>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
