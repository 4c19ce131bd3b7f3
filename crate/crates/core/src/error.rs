use thiserror::Error;

/// Errors raised by the KdV schemes and their supporting linear algebra.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KdvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `A` (rows `(1, 1, 0, ..)`) is singular when the grid has an even number of points.
    #[error("A singular for even n (n = {n})")]
    SingularA { n: usize },

    #[error("right-hand side is not in the range of B: entries sum to {sum:e}")]
    IncompatibleRhs { sum: f64 },

    #[error(
        "fixed-point iteration diverged after {iterations} sweeps (last residual {residual:e})"
    )]
    Divergence { iterations: usize, residual: f64 },

    #[error("the coefficient matrix is degenerate: rank {rank} < {expected}")]
    DegenerateSystem { rank: usize, expected: usize },

    #[error("circulant operator is singular (min |symbol| = {min_symbol:e})")]
    SingularLinearSystem { min_symbol: f64 },

    #[error("solution blew up at step {step} (max |u| = {max_abs:e})")]
    Blowup { step: usize, max_abs: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: usize, message: String },

    #[error("invalid refinement sequence: {0}")]
    InvalidRefinement(String),
}

impl KdvError {
    /// Attaches the index of the step that produced a blow-up.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Self::Blowup { max_abs, .. } => Self::Blowup { step, max_abs },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, KdvError>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(KdvError::LengthMismatch { expected, actual })
    }
}
