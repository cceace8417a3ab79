use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature vector has zero norm")]
    ZeroNormInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("template has no media")]
    EmptyTemplate,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series is constant; correlation undefined")]
    ConstantSeries,

    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("invalid feature vector: {0}")]
    InvalidFeature(&'static str),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid score vector: {0}")]
    InvalidScores(&'static str),

    #[error("lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),

    #[error("quality pooling requires detection probabilities for every medium")]
    MissingQualityScores,

    #[error("detection probability {0} outside (0, 1)")]
    InvalidDetectionProb(f64),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid margin parameters: {0}")]
    InvalidMarginParams(&'static str),

    #[error("unknown domain code {0}")]
    UnknownDomain(u8),

    #[error("subject {subject} has no media in domain {domain}")]
    EmptyDomain { subject: String, domain: u8 },

    #[error("need at least 2 subjects to split galleries, got {0}")]
    TooFewSubjects(usize),

    #[error("invalid protocol configuration: {0}")]
    InvalidProtocol(String),

    #[error("probe {0} has no mate in the gallery")]
    MissingMate(String),

    #[error("probe set is empty")]
    EmptyProbeSet,

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("fpir target {0} outside [0, 1]")]
    InvalidFpirTarget(f64),

    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),

    #[error("bad magic bytes {0:?}, expected \"FTBK\"")]
    BadMagic([u8; 4]),

    #[error("unsupported feature bank version {0}")]
    VersionUnsupported(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
