use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("quadrature did not converge after {levels} grading levels ({context})")]
    QuadratureNonConvergence { levels: usize, context: String },

    #[error("strip boundary {point} is not a mesh node")]
    Alignment { point: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate denominator: strip mass {0:e} is below 1e-300")]
    DegenerateDenominator(f64),

    #[error("root find failed for exterior cell {cell}")]
    RootFind { cell: usize },

    #[error("requested {requested} eigenvalues but only {available} are finite")]
    TooManyEigenvalues { requested: usize, available: usize },

    #[error("Cholesky factorization failed: {0}")]
    Cholesky(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("empty record list")]
    EmptyRecords,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
