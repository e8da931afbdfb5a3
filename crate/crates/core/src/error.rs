use std::io;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unachievable condition number {target} for a {d}x{d} matrix (minimum is {d})")]
    UnachievableCondition { target: f64, d: usize },

    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("invalid noise scale {0}")]
    InvalidScale(f64),

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("ragged row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("more shards ({shards}) than samples ({samples})")]
    TooManyShards { shards: usize, samples: usize },

    #[error("augmentation target must be positive, got {target} for a base of {base} samples")]
    AugmentTarget { target: usize, base: usize },

    #[error("framing error: {0}")]
    Framing(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("transport error: {0}")]
    Transport(#[from] io::Error),

    #[error("timed out waiting for participants: {0}")]
    PartialData(String),

    #[error("invalid format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown {kind} {id:?}")]
    UnknownId { kind: &'static str, id: String },

    #[error("report output: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
