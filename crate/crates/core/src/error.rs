//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Failures reported by grid, transport, flow, particle and bound routines.
///
/// Numerical payloads are carried as `f64` regardless of the scalar type used
/// for the computation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("operation supports d = 1 only, got d = {0}")]
    DimensionUnsupported(usize),
    #[error("density has a cell value {value:e} below the positivity floor {floor:e}")]
    DegenerateDensity { value: f64, floor: f64 },
    #[error("time must be positive, got {0}")]
    InvalidTime(f64),
    #[error("diffusivity must be positive, got {0}")]
    InvalidTau(f64),
    #[error("bandwidth must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("interaction kernel is not even (asymmetry {0:e})")]
    NotEven(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("sandwich violated: lower {lower:e}, mid {mid:e}, upper {upper:e}")]
    SandwichViolation { lower: f64, mid: f64, upper: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("negative density {value:e} after a step")]
    NegativeDensity { value: f64 },
    #[error("energy increased by {increase:e} at t = {t}")]
    EnergyIncrease { t: f64, increase: f64 },
    #[error("drift magnitude {value} exceeds declared bound {bound}")]
    DriftBoundViolation { value: f64, bound: f64 },
    #[error("ensemble domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("invalid regime: {0}")]
    InvalidRegime(String),
    #[error("insufficient data: {got} samples, {needed} required")]
    InsufficientData { got: usize, needed: usize },
    #[error("non-positive gap {value:e} at t = {t}")]
    NonPositiveGap { t: f64, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
