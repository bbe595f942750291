//! Crate-wide error type. Variants mirror the failure modes of the pipeline
//! stages so the CLI can map them onto exit codes.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("font {font}: no outline for letter '{letter}'")]
    MissingGlyph { font: String, letter: char },

    #[error("unparseable font {path}: {reason}")]
    UnparseableFont { path: PathBuf, reason: String },

    #[error("too few fonts: the {split} split would be empty ({available} fonts available)")]
    TooFewFonts { split: String, available: usize },

    #[error("insufficient fonts in split '{split}': need at least 2 fonts with 2+ letters, found {found}")]
    InsufficientFonts { split: String, found: usize },

    #[error("shape mismatch: {expected} vs {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("attention row is not a probability distribution (layer {layer}, head {head}, row {row}: sum deviates by {deviation:.2e})")]
    NonStochasticAttention {
        layer: usize,
        head: usize,
        row: usize,
        deviation: f64,
    },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("weight cache miss for font '{font}' letter '{letter}'")]
    CacheMiss { font: String, letter: char },

    #[error("training diverged at step {step}: loss is not finite")]
    Divergence { step: usize },

    #[error("empty source image set")]
    EmptySourceSet,

    #[error("unknown letter '{0}': expected A-Z")]
    UnknownLetter(char),

    #[error("empty edge set for {which}")]
    EmptyEdgeSet { which: String },

    #[error("key mismatch between directories: {missing_in_gen} pairs missing in generated, {missing_in_gt} missing in ground truth; first: {first}")]
    KeyMismatch {
        missing_in_gen: usize,
        missing_in_gt: usize,
        first: String,
    },

    #[error("degenerate rank: only {nonzero} nonzero singular values")]
    DegenerateRank { nonzero: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    /// CLI exit code: 2 usage, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } => 4,
            Error::InvalidConfig(_) => 2,
            _ => 3,
        }
    }
}
