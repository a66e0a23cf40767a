use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("category directory not found: {0}")]
    CategoryNotFound(PathBuf),

    #[error("category {category:?} is not one of the supported {kind} categories")]
    UnsupportedCategory { kind: String, category: String },

    #[error("anomalous test image has no ground-truth mask: {0}")]
    MaskMissing(PathBuf),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("layout error for {path}: {reason}")]
    Layout { path: PathBuf, reason: String },

    #[error("split {0} has no entries")]
    EmptySplit(&'static str),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("prior does not match latent geometry: {0}")]
    PriorMismatch(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("kernel is not toroidally symmetric: imaginary DFT residue {residue:e}")]
    Symmetry { residue: f64 },

    #[error("dense oracle refused lattice of {n} sites (limit 4096)")]
    OracleTooLarge { n: usize },

    #[error("labels contain a single class ({positives} positives of {total})")]
    DegenerateLabels { positives: usize, total: usize },

    #[error("no evaluable images in category {0}")]
    EmptyEvaluation(String),

    #[error("duplicate result for category {category:?}, model {model:?}")]
    DuplicateResult { category: String, model: String },

    #[error("anomaly map is already normalized; fusion expects raw maps")]
    NotRaw,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Candle(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// inputs or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::Numeric(_))
    }
}
