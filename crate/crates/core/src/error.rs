use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("duplicate dataset id {0}")]
    DuplicateDataset(u32),

    #[error("dataset {dataset}: local identity {identity} outside [0, {limit})")]
    IdentityOutOfRange { dataset: u32, identity: usize, limit: usize },

    #[error("registry has no training samples")]
    EmptyRegistry,

    #[error("attribute annotation does not match schema: {0}")]
    Annotation(String),

    #[error("{path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },

    #[error("no samples in {0}")]
    NoSamples(PathBuf),

    #[error("zero-norm vector has no cosine distance")]
    ZeroNorm,

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("identities seen by a single camera: {0:?}")]
    SingleCamera(Vec<usize>),

    #[error("need {needed} identities, dataset has {available}")]
    TooFewIdentities { needed: usize, available: usize },

    #[error("sample {0} has no signature in the store")]
    MissingSignature(u64),

    #[error("configuration mismatch in field `{field}`: expected {expected}, found {found}")]
    ConfigMismatch { field: String, expected: String, found: String },

    #[error("model digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { expected: String, found: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("training diverged at step {step}: {what} is not finite")]
    Divergence { step: u64, what: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

macro_rules! ensure {
    ($cond:expr, $err:expr) => {
        if !$cond {
            return Err($err);
        }
    };
}
pub(crate) use ensure;
