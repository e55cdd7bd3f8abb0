use thiserror::Error;

/// Errors raised across the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-monotonic time at sample {index}")]
    NonMonotonicTime { index: usize },

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("dimension {dim} out of range (trajectory has {dims})")]
    DimOutOfRange { dim: usize, dims: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParams(String),

    #[error("insufficient data for goal {goal}: {transitions} transitions (need {need})")]
    InsufficientData {
        goal: usize,
        transitions: usize,
        need: usize,
    },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("rank-deficient design matrix; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("all goal likelihoods are -inf at transition {index}")]
    ZeroLikelihood { index: usize },

    #[error("grid does not contain {what}")]
    GridCoverage { what: String },

    #[error("trajectory {id}: {source}")]
    Trajectory {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the trajectory identifier it occurred on.
    pub fn in_trajectory(self, id: impl Into<String>) -> Self {
        Error::Trajectory {
            id: id.into(),
            source: Box::new(self),
        }
    }
}
