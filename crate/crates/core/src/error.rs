use thiserror::Error;

/// Errors produced anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("log of non-positive entry {value} at index {index}")]
    NonPositiveLog { index: usize, value: f64 },
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("class id {id} out of range for {classes} classes")]
    ClassOutOfRange { id: usize, classes: usize },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot((usize, usize)),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("all learning-rate probes diverged; try rescaling the input data")]
    AllProbesDiverged,
    #[error(
        "training diverged at epoch {epoch}, batch {batch} (tau={tau}, lr={learning_rate}): {detail}"
    )]
    Diverged {
        epoch: usize,
        batch: usize,
        tau: f64,
        learning_rate: f64,
        detail: String,
    },
    #[error("labels are required: {0}")]
    MissingLabels(&'static str),
    #[error("model is not trained")]
    Untrained,
    #[error("operation not supported: {0}")]
    Unsupported(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable, machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonPositiveLog { .. } => "non_positive_log",
            Error::InvalidTemperature(_) => "invalid_temperature",
            Error::ClassOutOfRange { .. } => "class_out_of_range",
            Error::NonScalarRoot(_) => "non_scalar_root",
            Error::NonFinite(_) => "non_finite",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::AllProbesDiverged => "all_probes_diverged",
            Error::Diverged { .. } => "diverged",
            Error::MissingLabels(_) => "missing_labels",
            Error::Untrained => "untrained",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
