use thiserror::Error;

/// Errors produced by the kernel routines and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("columns are not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("interpolation constraints are infeasible (residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("linear system is inconsistent (least-squares residual {residual:.3e})")]
    InconsistentSystem { residual: f64 },

    #[error("kernel is not normalized (K(x,x) != 1)")]
    NotNormalized,

    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    #[error("pre-image search failed after {restarts} restarts (best residual {best_distance:.3e})")]
    PreimageFailed {
        best_point: Vec<f64>,
        best_distance: f64,
        restarts: usize,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration errors, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::InvalidDomain(_)
            | Error::InvalidParameter(_)
            | Error::EmptyInput(_)
            | Error::NotNormalized => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}
