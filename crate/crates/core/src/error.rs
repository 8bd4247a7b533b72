use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("compact set has no points")]
    EmptySet,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },

    #[error("query at t={t} is {distance} from the reference arc, locality radius is {radius}")]
    TubeViolation { t: f64, distance: f64, radius: f64 },

    #[error("one-sided limit at t={t} not certified after {} refinements", gaps.len())]
    LimitNotCertified { t: f64, gaps: Vec<f64> },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("cumulative variation is not monotone at knot {index} (impure oracle?)")]
    NotMonotone { index: usize },

    #[error("parameter set A1 is not contained in A (offending point {point:?})")]
    NotSubset { point: Vec<f64> },

    #[error("jump data exceeds the variation increments at indices {indices:?}")]
    JumpBoundViolation { indices: Vec<usize> },

    #[error("trajectory left the locality tube at t={t}")]
    TubeExit { t: f64 },

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("dynamic programming grid exhausted at stage {stage}")]
    GridExit { stage: usize },

    #[error("candidate is not stationary, KKT residual {residual:e}")]
    NonStationary { residual: f64 },

    #[error("missing gradient oracle for {0}")]
    MissingGradient(&'static str),

    #[error("initial state is not on the constraint boundary: h(x0) = {h0}")]
    NotBoundaryStart { h0: f64 },

    #[error("problem shape not supported here: {0}")]
    ProblemShape(String),

    #[error("Euler stationarity residual {residual:e} exceeds tolerance {tol:e}")]
    EulerResidual { residual: f64, tol: f64 },
}
