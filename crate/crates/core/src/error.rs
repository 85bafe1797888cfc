use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    Provider,
    Validation,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    // vectors and kernels
    #[error("embedding must have at least one component")]
    EmptyVector,
    #[error("non-finite value at component {index}")]
    NonFiniteValue { index: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("zero-norm vector: cosine similarity is undefined")]
    ZeroNormVector,

    // aggregation
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {items} items but {weights} weights")]
    LengthMismatch { items: usize, weights: usize },
    #[error("all weights are zero")]
    AllZeroWeights,
    #[error("invalid weight {value} at position {index}: weights must be finite and nonnegative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("no weight supplied for document {0:?}")]
    MissingWeight(String),
    #[error("duplicate page index {page_index} in document {doc_id:?}")]
    DuplicatePage { doc_id: String, page_index: u32 },
    #[error("pages from different documents ({first:?} and {other:?}) cannot be pooled together")]
    MixedDocuments { first: String, other: String },

    // classifier
    #[error("no classes to classify against")]
    NoClasses,

    // vector index
    #[error("index has not been trained")]
    NotTrained,
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("nprobe {nprobe} out of range 1..={nlist}")]
    BadNprobe { nprobe: usize, nlist: usize },
    #[error("need at least {nlist} vectors to train, got {count}")]
    TooFewVectors { count: usize, nlist: usize },
    #[error("nlist must be at least 1")]
    InvalidNlist,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index file inconsistent with store: {0}")]
    IndexMismatch(String),

    // ingestion
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("bad response from embedding provider: {0}")]
    ProviderBadResponse(String),
    #[error("content rejected by embedding provider: {0}")]
    ContentRejected(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    // store
    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("inconsistent dimension: store is {expected}-d but record has {actual} components")]
    InconsistentDim { expected: usize, actual: usize },
    #[error("not a FEDS file (bad magic)")]
    BadMagic,
    #[error("unsupported FEDS version byte {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    TruncatedFile {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("label id {label_id} out of range (label table has {labels} entries)")]
    BadLabelRef { label_id: u32, labels: usize },
    #[error("malformed FEDS file: {0}")]
    Malformed(String),

    // eval
    #[error("class {0:?} has fewer than 3 samples")]
    ClassTooSmall(String),
    #[error("evaluation needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. }
            | Error::BadMagic
            | Error::UnsupportedVersion(_)
            | Error::CrcMismatch { .. }
            | Error::TruncatedFile { .. }
            | Error::BadLabelRef { .. }
            | Error::Malformed(_)
            | Error::IndexMismatch(_) => ErrorCategory::Io,
            Error::ProviderUnavailable(_)
            | Error::ProviderBadResponse(_)
            | Error::ContentRejected(_) => ErrorCategory::Provider,
            _ => ErrorCategory::Validation,
        }
    }

    /// True for errors raised when a FEDS file fails its integrity checks.
    pub fn is_integrity_failure(&self) -> bool {
        matches!(
            self,
            Error::CrcMismatch { .. }
                | Error::TruncatedFile { .. }
                | Error::BadMagic
                | Error::UnsupportedVersion(_)
        )
    }
}
