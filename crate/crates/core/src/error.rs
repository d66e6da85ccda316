use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in input")]
    NonFinite,
    #[error("malformed set: {0}")]
    InvalidSet(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point outside the projection tube, nearest point is not unique")]
    TubeViolation,
    #[error("point is not in the set (distance {distance:.3e})")]
    NotInSet { distance: f64 },
    #[error("finite-difference tangent projection did not stabilize (gap {gap:.3e})")]
    NonconvergedFD { gap: f64 },
    #[error("linear map has no positive singular value")]
    SingularMap,
    #[error("step too large: h*|f| = {step:.3e} must stay below r/2 = {half_r:.3e}")]
    StepTooLarge { step: f64, half_r: f64 },
    #[error("integration failed at step {step}: {source}")]
    StepFailed { step: usize, source: Box<Error> },
    #[error("no admissible cap m below 1e9")]
    CapSearchOverflow,
    #[error("resolvent residual floor {residual:.3e} exceeds 1e-6")]
    NoSolutionInGrid { residual: f64 },
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("subset violation at {point:?}")]
    SubsetViolation { point: Vec<f64> },
    #[error("condition failed at {witness:?} with margin {margin:.3e}")]
    ConditionFailed { witness: Vec<f64>, margin: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPD { min_eig: f64 },
    #[error("initial point norm {norm:.3e} is not below the stability radius {radius:.3e}")]
    RadiusViolation { norm: f64, radius: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("constraint map is not surjective (row rank {rank} < {rows})")]
    QualificationFailure { rank: usize, rows: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of a mathematical hypothesis, as opposed to bad input or numerics.
    pub fn is_hypothesis(&self) -> bool {
        match self {
            Error::DomainViolation(_)
            | Error::SubsetViolation { .. }
            | Error::ConditionFailed { .. }
            | Error::NotPD { .. }
            | Error::RadiusViolation { .. }
            | Error::HypothesisViolation(_)
            | Error::QualificationFailure { .. } => true,
            Error::StepFailed { source, .. } => source.is_hypothesis(),
            _ => false,
        }
    }
}
