use std::path::PathBuf;

use crate::tensor::Dims;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("data length {len} does not match dims {dims}")]
    DataLength { dims: Dims, len: usize },

    #[error("all dims must be >= 1, got {0}")]
    ZeroDim(Dims),

    #[error("{op}: expected {expected} input channels, got {got}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: output spatial size would be non-positive for input {h}x{w}")]
    NonPositiveOutput { op: &'static str, h: usize, w: usize },

    #[error("{op}: spatial size {h}x{w} must be even")]
    OddSpatial { op: &'static str, h: usize, w: usize },

    #[error("{op}: channel count {c} must be even")]
    OddChannels { op: &'static str, c: usize },

    #[error("value {0} is not on this tape")]
    UnknownVar(usize),

    #[error("backward needs a scalar output or a seed gradient, output has dims {0}")]
    NotScalar(Dims),

    #[error("in block `{block}`: {source}")]
    InBlock {
        block: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn in_block(self, block: impl Into<String>) -> Self {
        Error::InBlock {
            block: block.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) trait BlockContext<T> {
    fn block(self, name: &str) -> Result<T>;
}

impl<T> BlockContext<T> for Result<T> {
    fn block(self, name: &str) -> Result<T> {
        self.map_err(|e| e.in_block(name))
    }
}
