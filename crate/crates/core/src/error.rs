use std::fmt;

use thiserror::Error;

/// Treatment arm, used to name the offending group in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Control,
    Treated,
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arm::Control => f.write_str("control"),
            Arm::Treated => f.write_str("treated"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite; Cholesky factorization failed")]
    NotPositiveDefinite,

    #[error("unknown simulation id {0} (valid ids are 1..=6)")]
    UnknownSimulation(u32),

    #[error("the {0} arm is empty")]
    EmptyArm(Arm),

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("invalid neighbour count k={k} for n={n} training rows")]
    InvalidK { k: usize, n: usize },

    #[error("treatment vector contains a single class")]
    SingleClass,

    #[error("propensity {value} at row {row} is not strictly inside (0, 1)")]
    DivisionGuard { row: usize, value: f64 },

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resource cap exceeded: {0}")]
    ResourceExhausted(String),

    #[error("{failed} of {total} bootstrap replicates failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("ground truth (potential outcomes) is required but missing")]
    MissingGroundTruth,

    #[error("mean EMSE is zero at n={0}; log-log fit undefined")]
    ZeroEmse(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid learner spec `{spec}`: {reason}")]
    LearnerSpec { spec: String, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
