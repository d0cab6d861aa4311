use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library reports.
///
/// [`Error::kind`] gives a stable, machine-parsable tag used by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subvector spec: {0}")]
    InvalidSpec(String),
    #[error("index {index} outside capacity 1..={capacity}")]
    IndexOutOfCapacity { index: u64, capacity: u64 },
    #[error("batch {batch} outside prefix capacity 1..={capacity}")]
    BatchOutOfCapacity { batch: u64, capacity: u64 },
    #[error("invalid range: first {first} > last {last}")]
    InvalidRange { first: u64, last: u64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("size mismatch: {latents} latents vs {codes} codes")]
    SizeMismatch { latents: usize, codes: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid teacher distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty code pool")]
    EmptyPool,
    #[error("index {index} outside 1..={total}")]
    IndexOutOfRange { index: u64, total: u64 },
    #[error("missing decoder snapshot for replayed index {0}")]
    MissingSnapshot(u64),
    #[error("missing frozen classifier copy while replay is non-empty")]
    MissingFrozenCopy,
    #[error("non-finite loss in {context}")]
    NonFiniteLoss { context: String },
    #[error("bad magic 0x{found:08x} in {path} (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },
    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("checksum mismatch for {path}: expected {expected}, found {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "invalid-spec",
            Error::IndexOutOfCapacity { .. } => "index-out-of-capacity",
            Error::BatchOutOfCapacity { .. } => "batch-out-of-capacity",
            Error::InvalidRange { .. } => "invalid-range",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::SizeMismatch { .. } => "size-mismatch",
            Error::LabelOutOfRange { .. } => "label-out-of-range",
            Error::InvalidDistribution(_) => "invalid-distribution",
            Error::EmptyPool => "empty-pool",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::MissingSnapshot(_) => "missing-snapshot",
            Error::MissingFrozenCopy => "missing-frozen-copy",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::BadMagic { .. } => "bad-magic",
            Error::Truncated { .. } => "truncated",
            Error::CountMismatch { .. } => "count-mismatch",
            Error::Checksum { .. } => "checksum-mismatch",
            Error::InvalidScenario(_) => "invalid-scenario",
            Error::InvalidCheckpoint(_) => "invalid-checkpoint",
            Error::Config(_) => "config",
            Error::EmptyTestSet => "empty-test-set",
            Error::MissingCheckpoint(_) => "missing-checkpoint",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
