use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input value: {0}")]
    NonFiniteInput(String),
    #[error("weight matrix is not symmetric positive definite: {0}")]
    NonPositiveWeights(String),
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix has no real eigenvalue")]
    NoRealEigenvalue,
    #[error("shifted system is near singular (condition estimate {condition:e})")]
    NearSingular { condition: f64 },
    #[error("all receiver coordinates are known; nothing to solve")]
    AllCoordinatesKnown,
    #[error("linear system is rank deficient")]
    RankDeficient,
    #[error("iterate coincides with sender {sender}; residual gradient undefined")]
    NonSmoothPoint { sender: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unknown anchor `{0}`")]
    UnknownAnchor(String),
    #[error("no usable measurements")]
    EmptyProblem,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
