use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("matrix is not symmetric within tolerance (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("matrix is not skew-symmetric within tolerance (defect {defect:.3e})")]
    NotSkewSymmetric { defect: f64 },
    #[error("matrix is not Hermitian within tolerance (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositiveSemidefinite { min_eig: f64 },
    #[error("field declared real but data has nonzero imaginary parts")]
    NotReal,
    #[error("linear operator is singular within tolerance ({context})")]
    SingularOperator { context: String },
    #[error("matrix is singular ({context})")]
    SingularMatrix { context: String },
    #[error("no stabilizing solution: {context}")]
    NoStabilizingSolution { context: String },
    #[error("iteration failed to converge: {context}")]
    ConvergenceFailure { context: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
