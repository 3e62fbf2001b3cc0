use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: unsupported format: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{}: corrupt header: {reason}", path.display())]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{}: expected 3 colour channels, found {found}", path.display())]
    ChannelCount { path: PathBuf, found: usize },

    #[error("{}: decode failed: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },

    #[error("{}: encode failed: {reason}", path.display())]
    Encode { path: PathBuf, reason: String },

    #[error("invalid bit depth {0}; expected 8 or 16")]
    BitDepth(u8),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("image is {width}x{height}, smaller than the {window}x{window} window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero dynamic range: every sample equals {0}")]
    ZeroDynamicRange(f64),

    #[error("weights sum to {sum}, expected {target} (tolerance 1e-6)")]
    WeightSum { sum: f64, target: f64 },

    #[error("expected {expected} {what}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("id sets differ: {0}")]
    IdMismatch(String),

    #[error("{id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("singular KKT system (condition number {condition:.3e}); methods are linearly dependent on the constraint plane, retry with a positive ridge")]
    Singular { condition: f64 },

    #[error("grid step {0} does not evenly divide 1")]
    GridStep(f64),

    #[error("ranking: {0}")]
    Ranking(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches an item id (image id, method name) to an error.
    pub fn for_item(self, id: impl Into<String>) -> Self {
        Error::Item {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
