use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular input: {0}")]
    Singular(String),
    #[error("parameters are not operator-grade: gamma + 2s + 3 = {0} must be positive")]
    NotOperatorGrade(f64),
    #[error("polynomial degree {0} exceeds the supported cap of 4")]
    Capacity(usize),
    #[error("tolerance not met: estimate {estimate:.3e} exceeds {tolerance:.3e} ({what})")]
    Tolerance { what: String, estimate: f64, tolerance: f64 },
    #[error("numerical abort: {0}")]
    Abort(String),
    #[error("invalid quadrature spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
