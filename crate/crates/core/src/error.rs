use std::path::PathBuf;

use thiserror::Error;

/// Structured failure from one of the file codecs.
#[derive(Debug, Error)]
#[error("{format} parse error at byte {offset}: {message}")]
pub struct CodecError {
    pub format: &'static str,
    pub offset: usize,
    pub message: String,
}

impl CodecError {
    pub fn new(format: &'static str, offset: usize, message: impl Into<String>) -> Self {
        CodecError { format, offset, message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },

    #[error("inverse tone curve undefined for I = {0} (requires 0 <= I < 1)")]
    CurveDomain(f64),

    /// No pixel is exactly zero, so the geometric-mean recovery has no
    /// anchor. Supply the scale explicitly instead.
    #[error(
        "absolute scale unrecoverable: none of the {n_total} pixels is zero; \
         supply the geometric mean explicitly (g_override / --g-override)"
    )]
    ScaleUnrecoverable { n_total: usize },

    #[error(
        "absolute scale unrecoverable: {n_zero} zero pixels of {n_total} give log G = {log_g}; \
         supply the geometric mean explicitly (g_override / --g-override)"
    )]
    ScaleDegenerate { n_zero: usize, n_total: usize, log_g: f64 },

    #[error("tensor shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("batch norm evaluated before any running statistics exist")]
    BatchNormNoStats,

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("weight file was written for {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("weight file integrity check failed: stored crc {stored:08x}, computed {computed:08x}")]
    Integrity { stored: u32, computed: u32 },

    #[error("non-finite loss at epoch {epoch}, iteration {iteration}; state: {dump}")]
    NonFiniteLoss { epoch: usize, iteration: usize, dump: String },

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
