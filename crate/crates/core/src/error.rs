use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate vector: norm {norm:e} is below 1e-12")]
    DegenerateVector { norm: f32 },

    #[error("empty batch: every target position is ignored")]
    EmptyBatch,

    #[error("missing gradient for trainable parameter `{name}`")]
    MissingGrad { name: String },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("sequence of length {len} does not fit L_max {max_len}")]
    Length { len: usize, max_len: usize },

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("table construction failed: {0}")]
    Construction(String),

    #[error("requested {requested} distinct words but only {available} exist")]
    Exhausted { requested: usize, available: u128 },

    #[error("character {ch:?} is not in the alphabet of script `{script}`")]
    Alphabet { ch: String, script: String },

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("timer resolution {resolution_ns} ns is coarser than the measured interval {measured_ns} ns")]
    Resolution { resolution_ns: u128, measured_ns: u128 },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("bad magic bytes in {path}")]
    Magic { path: PathBuf },

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("checkpoint role `{found}` where `{expected}` was required")]
    Role { found: String, expected: String },

    #[error("payload digest mismatch in {path}")]
    Digest { path: PathBuf },

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
