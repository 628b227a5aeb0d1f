use thiserror::Error;

/// Errors produced by the measure, transport, curve and convexity routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Points, weights or measures disagree on length or ambient dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measure has no atoms")]
    Empty,

    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("total mass must be positive, got {0}")]
    NonpositiveTotalMass(f64),

    /// Total mass is positive but not within tolerance of 1.
    #[error("total mass {0} is not within 1e-9 of 1")]
    InvalidTotalMass(f64),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    /// Two plans that must share a source measure do not.
    #[error("plans do not share the same source measure")]
    SourceMismatch,

    #[error("transportation simplex did not terminate within {0} pivots")]
    SolverStalled(usize),

    #[error("value {value} outside of the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    /// No verified geodesic radius was found down to the minimal step.
    #[error("no verified geodesic radius at s = {0}")]
    NoRadius(f64),

    #[error("epsilon must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    /// The functional does not provide a Wasserstein gradient.
    #[error("functional `{0}` has no Wasserstein gradient")]
    GradientUnavailable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
