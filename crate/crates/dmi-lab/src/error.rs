//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: axis {axis} out of range for rank-{rank} tensor")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: expected rank-{expected} tensor, found shape {found:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        found: Vec<usize>,
    },

    #[error("{op}: empty index selection")]
    EmptySelection { op: &'static str },

    #[error("{op}: index {index} out of range (size {size})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        size: usize,
    },

    #[error("{op}: division by exact zero")]
    DivisionByZero { op: &'static str },

    #[error("{op}: input must be positive, found {value}")]
    NonPositiveInput { op: &'static str, value: f64 },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid probability data in {context}: {detail}")]
    InvalidProbability {
        context: &'static str,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("zero-norm embedding at row {row}")]
    ZeroNormEmbedding { row: usize },

    #[error("empty dataset in {0}")]
    EmptyDataset(&'static str),

    #[error("training diverged (non-finite loss) at {context}")]
    Diverged { context: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported container version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("config parse error at line {line}: {detail}")]
    ConfigParse { line: usize, detail: String },

    #[error("metrics files disagree on schema: {0:?}")]
    MixedSchema(Vec<String>),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}
