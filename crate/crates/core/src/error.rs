use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (max |A - A^H| = {deviation:e})")]
    NonHermitian { deviation: f64 },

    #[error("matrix is singular to working precision (smallest singular value {smallest:e})")]
    SingularInput { smallest: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vector norm {norm} is not 1")]
    NotNormalized { norm: f64 },

    #[error("operator {index} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { index: usize, min_eigenvalue: f64 },

    #[error("elements do not sum to identity (deviation {deviation:e} > tolerance {tolerance:e})")]
    CompletenessViolation { deviation: f64, tolerance: f64 },

    #[error("matrix is not unitary (deviation {deviation:e} > tolerance {tolerance:e})")]
    NotUnitary { deviation: f64, tolerance: f64 },

    #[error("port index {index} outside 1..={ports}")]
    IndexOutOfRange { index: usize, ports: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("element {index} is not rank one (second eigenvalue {second:e})")]
    NotRankOne { index: usize, second: f64 },

    #[error("solver did not converge: {0}")]
    SolverNotConverged(String),

    #[error("missing table entry: {0}")]
    MissingEntry(String),

    #[error("setting {0} has no counts")]
    EmptySetting(String),

    #[error("standard deviation must be positive, got {0}")]
    NonpositiveSigma(f64),

    #[error("all preparation amplitudes are zero")]
    ZeroState,

    #[error("all analysis transmissivities are zero")]
    ZeroTransmission,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Validation-class errors map to a distinct process exit code in the CLI.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SolverNotConverged(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_)
        )
    }
}
