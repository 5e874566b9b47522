use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shooting failed: {0}")]
    Solver(String),

    #[error("accuracy check failed: {what} = {value:.3e} exceeds bound {bound:.3e}")]
    Accuracy { what: String, value: f64, bound: f64 },

    #[error("spectral error: {0}")]
    Spectral(String),

    #[error("non-simple spectrum: {count} negative eigenvalues of L-L+ in the radial sector")]
    NonsimpleSpectrum { count: usize },

    #[error("resolvent at shift {shift} is singular or ill-conditioned (estimate {condition:.3e})")]
    Resolvent { shift: f64, condition: f64 },

    #[error("expansion order {order} exceeds the cap {cap}")]
    OrderTooHigh { order: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("frame fit failed: {0}")]
    Fit(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("preparation failed: {0}")]
    Preparation(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("cutoff unresolved: 2R = {two_r} exceeds r_max = {r_max}")]
    CutoffUnresolved { two_r: f64, r_max: f64 },

    #[error("singular matrix at pivot {0}")]
    Singular(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
