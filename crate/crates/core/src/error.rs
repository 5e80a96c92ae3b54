use thiserror::Error;

/// Errors raised by the solver laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: expected 1, 2 or 3")]
    InvalidDimension(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("fields belong to different bases")]
    BasisMismatch,

    #[error("truncation index {requested} exceeds the largest mode index {available}")]
    TruncationOutOfRange { requested: usize, available: usize },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("grid size mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("coefficient length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("noise regularity gamma = {gamma} does not exceed d/2 = {half_dim}")]
    GammaTooSmall { gamma: f64, half_dim: f64 },

    #[error("infeasible ladder: {0}")]
    LadderInfeasible(String),

    #[error("inner solver diverged at step {step}{}: residual {residual:e} after {iterations} iterations", .level.as_ref().map(|l| format!(" (level {l})")).unwrap_or_default())]
    SolverDiverged {
        step: usize,
        residual: f64,
        iterations: usize,
        level: Option<String>,
    },

    #[error("dense oracle did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("gap ladder spans {decades:.2} decades, at least 2 are required")]
    InsufficientGapDecades { decades: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach a ladder level label to a solver failure.
    pub fn with_level(self, label: impl Into<String>) -> Self {
        match self {
            Error::SolverDiverged {
                step,
                residual,
                iterations,
                ..
            } => Error::SolverDiverged {
                step,
                residual,
                iterations,
                level: Some(label.into()),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
