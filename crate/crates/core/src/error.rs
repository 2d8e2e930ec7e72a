use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // -- datasets --
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    // -- error model --
    #[error("negative variance {variance} at {volts} V, k = {k}")]
    NegativeVariance { volts: f64, k: u64, variance: f64 },

    #[error("unknown voltage {0} V (not a declared level)")]
    UnknownVoltage(f64),

    #[error("no calibration rows for voltage level {0} V")]
    MissingLevel(f64),

    #[error("malformed calibration row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("level {volts} V has {rows} calibration row(s); at least 2 are needed")]
    InsufficientRows { volts: f64, rows: usize },

    #[error("error model is not fitted (level {0} V has no single-PE variance)")]
    Unfitted(f64),

    // -- sensitivity --
    #[error("invalid neuron id {0}")]
    InvalidNeuron(usize),

    #[error("neuron {neuron}: {activation} activation on the propagation path is not linearizable; use the Monte-Carlo method")]
    NonLinearPath { neuron: usize, activation: String },

    // -- optimizer --
    #[error("invalid assignment instance: {0}")]
    InvalidInstance(String),

    #[error("instance too large for exhaustive search ({0} combinations)")]
    TooLarge(f64),

    #[error("assignment does not cover neuron {0}")]
    MissingNeuron(usize),

    // -- systolic --
    #[error("voltage code {code} does not fit in {v_bits} selection bit(s)")]
    CodeOverflow { code: u32, v_bits: u32 },

    #[error("word {word:#x} wider than {width} bits")]
    OversizedWord { word: u32, width: u32 },

    // -- aging --
    #[error("outside model domain: {0}")]
    Domain(String),

    #[error("degenerate calibration targets: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
