use num_complex::Complex64;
use thiserror::Error;

/// Errors raised across the reduction pipeline.
#[derive(Debug, Error)]
pub enum MorError {
    #[error("parameter arity mismatch: expected {expected}, got {got}")]
    ParamArity { expected: usize, got: usize },

    #[error("non-finite value evaluating `{expr}` at s = {s}")]
    NonFinite { expr: String, s: Complex64 },

    #[error("fractional power evaluated on the negative real axis (s = {0})")]
    BranchCut(Complex64),

    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frequency-dependent map requires a value of s")]
    MissingFrequency,

    #[error("singular or ill-conditioned pencil at s = {s}, p = {p:?} (condition estimate {cond:.3e})")]
    SingularPencil { s: Complex64, p: Vec<f64>, cond: f64 },

    #[error("solve backward error {residual:.3e} exceeds tolerance at s = {s}, p = {p:?}")]
    Residual { s: Complex64, p: Vec<f64>, residual: f64 },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("tensor not flagged symmetric: {0}")]
    NotSymmetric(String),

    #[error("reduced tensor too large: {0} columns exceed the 1e8 guard")]
    TooLarge(u128),

    #[error("invalid interpolation plan: {0}")]
    InvalidPlan(String),

    #[error("invalid reduction order: {0}")]
    InvalidOrder(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("simulation diverged at t = {t}")]
    Diverged { t: f64 },

    #[error("time grid mismatch: {0}")]
    Grid(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("SVD failed: {0}")]
    Svd(String),

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("bundle: {0}")]
    Bundle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MorError>;

impl MorError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MorError::SingularPencil { .. }
                | MorError::Residual { .. }
                | MorError::NonFinite { .. }
                | MorError::BranchCut(_)
                | MorError::Diverged { .. }
                | MorError::Svd(_)
        )
    }
}
