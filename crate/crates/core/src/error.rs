use std::io;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("schema is empty")]
    EmptySchema,

    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("rank file line {line}: {message}")]
    RankFile { line: usize, message: String },

    #[error("schema fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("feature index {index} out of range for schema of {len} features")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("vector length {found} does not match schema size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains a single class ({0}); both benign and malware samples are required")]
    SingleClass(&'static str),

    #[error("sample `{0}` has no ground-truth label")]
    Unlabeled(String),

    #[error("training loss diverged (non-finite) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    ModelVersion { found: u32, supported: u32 },

    #[error("sample `{0}` has no active features to perturb")]
    NoActiveFeatures(String),

    #[error("k = {k} exceeds the {available} ranked features")]
    KOutOfRange { k: usize, available: usize },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
