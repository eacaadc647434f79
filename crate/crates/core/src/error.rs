use std::path::PathBuf;

use crate::features::DescriptorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("image {path} has zero width or height")]
    ZeroDimension { path: PathBuf },
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("unknown extractor kind `{0}`")]
    UnknownExtractor(String),
    #[error("descriptor kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: DescriptorKind,
        found: DescriptorKind,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("need at least {k} descriptors to train a {k}-word dictionary, got {available}")]
    TooFewDescriptors { k: usize, available: usize },
    #[error("only {distinct} distinct descriptors available for a {k}-word dictionary")]
    TooFewDistinct { k: usize, distinct: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed {what} file: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("map incompatible with query setup: {0}")]
    MapMismatch(String),
    #[error("ground truth missing for queries: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("ground truth names unknown ids: {}", .0.join(", "))]
    UnknownGroundTruthIds(Vec<String>),
    #[error("every sampled pair was skipped ({skipped} component-constant pairs)")]
    AllPairsSkipped { skipped: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
