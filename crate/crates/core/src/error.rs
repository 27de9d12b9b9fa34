use thiserror::Error;

/// Failures surfaced by the solvers and their building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument {value} outside its domain")]
    ScalarDomain { function: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("point lies outside the domain of the objective")]
    OutsideDomain,

    #[error("invalid path constants: {0}")]
    InvalidConstants(String),

    #[error("input pair is not centered: residual {residual:e} exceeds {bound:e}")]
    NotCentered { residual: f64, bound: f64 },

    #[error("centering lost after the step: residual {residual:e} exceeds {bound:e}; the declared self-concordance constant is probably too small")]
    CenteringViolated { residual: f64, bound: f64 },

    #[error("constraint matrix is rank deficient; dependent rows {0:?}")]
    RankDeficient(Vec<usize>),

    #[error("inconsistent linear system: {0}")]
    Inconsistent(String),

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
