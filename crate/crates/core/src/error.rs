use std::path::PathBuf;

use crate::pretext::PretextModel;

/// Errors produced anywhere in the masking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path:?}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI-1 data: {0}")]
    Parse(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("volume is not 3-dimensional: {0}")]
    Dimension(String),

    #[error("invalid phantom spec: {0}")]
    Spec(String),

    #[error("intensity unit mismatch: {0}")]
    Unit(String),

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite value encountered at position {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "axis {axis} of size {size} is not divisible by subvolume size {sub} \
         (nearest divisible sizes: {lower} and {upper})"
    )]
    Divisibility {
        /// 1-based axis number.
        axis: usize,
        size: usize,
        sub: usize,
        lower: usize,
        upper: usize,
    },

    #[error("subvolume index {index} out of range (P = {count})")]
    Index { index: usize, count: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("no foreground subvolume at lambda = {lambda}")]
    NoForeground { lambda: f64 },

    #[error("ratio {ratio} of {eligible} eligible subvolumes rounds to zero masked entries")]
    DegenerateRatio { ratio: f64, eligible: usize },

    #[error("region holds {pairs} voxel pairs under the offset, need at least 2")]
    InsufficientPairs { pairs: usize },

    #[error("foreground and background histograms overlap too much to pick a threshold")]
    NoSeparation,

    #[error("training diverged at epoch {epoch}")]
    Divergence {
        epoch: usize,
        last_finite: Box<PretextModel>,
    },

    #[error("json error: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
