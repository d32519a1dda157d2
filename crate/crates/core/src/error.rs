use thiserror::Error;

/// Crate-wide error type. Numeric routines return structured variants so
/// callers (and the CLI) can distinguish bad input from runtime failures.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Adaptive integrator drove the step size below the representable floor.
    #[error("stiffness: step underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    /// State blew up (NaN/inf) during integration.
    #[error("divergence: non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
