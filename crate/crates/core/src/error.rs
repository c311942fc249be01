use thiserror::Error;

pub type Result<T> = std::result::Result<T, BfiError>;

/// Every failure the engine can report.
///
/// Variants fall in two families: data/schema problems (the input is
/// malformed or inconsistent) and numerical problems (an optimum or a
/// positive-definite curvature could not be obtained). [`BfiError::is_numerical`]
/// tells them apart, which is what the CLI exit codes are built on.
#[derive(Debug, Error)]
pub enum BfiError {
    #[error("matrix is not positive definite (pivot {pivot}); consider a larger prior precision")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: |m[{row}][{col}] - m[{col}][{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("log-posterior is not finite at the starting point")]
    NonFiniteLogPosterior,

    #[error("dataset contains missing values; impute before fitting")]
    MissingValues,

    #[error("center {0} did not converge")]
    CenterNotConverged(usize),

    #[error("fit on the combined data did not converge")]
    PooledNotConverged,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("aggregated curvature is not positive definite (pivot {pivot}); check that the combined prior is compatible with the local priors")]
    AggregateNotPositiveDefinite { pivot: usize },

    #[error("nuisance block of center {0} is not positive definite")]
    BlockNotPositiveDefinite(usize),

    #[error("alpha must lie in (0, 0.5), got {0}")]
    InvalidAlpha(f64),

    #[error("at least two centers are required, got {0}")]
    InsufficientCenters(usize),

    #[error("unknown payload format version {0:?}")]
    UnknownVersion(String),

    #[error("malformed field at {path}: {reason}")]
    MalformedField { path: String, reason: String },

    #[error("inconsistent dimensions: {0}")]
    DimensionInconsistency(String),

    #[error("covariate {0:?} has zero variance")]
    ZeroVariance(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("cannot parse cell at row {row}, column {col:?}: {reason}")]
    UnparseableCell {
        row: usize,
        col: String,
        reason: String,
    },

    #[error("file has no data rows")]
    EmptyFile,

    #[error("predictor {predictor:?} is missing in row {row}")]
    PredictorMissing { predictor: String, row: usize },

    #[error("imputation model does not match the dataset: {0}")]
    ModelSchemaMismatch(String),

    #[error("cycle {cycle}: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<BfiError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BfiError {
    /// True for failures of the numerics (non-convergence, loss of
    /// positive-definiteness) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            BfiError::NotPositiveDefinite { .. }
            | BfiError::NonFiniteLogPosterior
            | BfiError::CenterNotConverged(_)
            | BfiError::PooledNotConverged
            | BfiError::AggregateNotPositiveDefinite { .. }
            | BfiError::BlockNotPositiveDefinite(_) => true,
            BfiError::Cycle { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_cycle(self, cycle: usize) -> Self {
        BfiError::Cycle {
            cycle,
            source: Box::new(self),
        }
    }
}
