use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A matrix that must be positive definite was not (pivot below tolerance).
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    /// The iterative eigensolver exceeded its sweep cap.
    #[error("eigensolver failed to converge")]
    ConvergenceFailure,

    /// A parameter was outside its valid domain.
    #[error("domain error: {0}")]
    DomainError(String),

    /// The minimizing h-subset has zero variance (at least h tied values).
    #[error("degenerate scale: minimizing subset has zero variance")]
    DegenerateScale,

    /// A data column could not be standardized.
    #[error("degenerate column {0}: cannot estimate a positive scale")]
    DegenerateColumn(usize),

    /// Non-finite value in the input data.
    #[error("invalid value (NaN or infinity) at row {row}")]
    InvalidValue { row: usize },

    /// Every GSSCM weight came out zero.
    #[error("all GSSCM weights are zero")]
    AllWeightsZero,

    /// The norms handed to the cutoff rule have zero interquartile range.
    #[error("degenerate norms: zero interquartile range")]
    DegenerateNorms,

    /// An initial estimate failed the condition-number test.
    #[error("ill-conditioned start (condition number {0:.3e})")]
    IllConditioned(f64),

    /// A concentration candidate approached singularity and was abandoned.
    #[error("singular candidate: condition number breached the threshold")]
    SingularCandidate,

    /// Both initial starts failed refinement or concentration.
    #[error("both initial starts failed")]
    BothStartsFailed,

    /// Too few observations received a positive reweighting weight.
    #[error("no usable inliers after reweighting")]
    NoInliers,

    /// New data width does not match the fitted width.
    #[error("width mismatch: fit has {expected} variables, data has {got}")]
    WidthMismatch { expected: usize, got: usize },

    /// A parallel block would be too small to fit.
    #[error("block too small: {m} observations for {p} variables")]
    BlockTooSmall { m: usize, p: usize },

    /// More than half of the parallel blocks failed to produce a fit.
    #[error("too few valid blocks: {ok} of {q}")]
    TooFewValidBlocks { ok: usize, q: usize },

    /// Structural problem with the input (shape, sample size, config).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
