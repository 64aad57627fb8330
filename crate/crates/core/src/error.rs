use thiserror::Error;

use crate::expr::{DiffError, EvalError, ParseError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("coercivity violated at x={x}, t={t}: residual {residual}")]
    Coercivity { x: f64, t: f64, residual: f64 },
    #[error("singular tridiagonal system at row {row}")]
    Singular { row: usize },
    #[error("step size dt={dt} exceeds stability bound {bound}; set the override flag to proceed")]
    Cfl { dt: f64, bound: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("random coefficients are not supported here: {0}")]
    RandomCoefficients(String),
}

pub type Result<T> = std::result::Result<T, Error>;
