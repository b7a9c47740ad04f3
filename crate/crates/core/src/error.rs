use thiserror::Error;

use crate::kam::StepRecord;
use crate::qp::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid discretization: {0}")]
    InvalidDiscretization(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("degenerate eigenvalues {first} and {second} (relative gap {gap:.3e})")]
    DegenerateSpectrum { first: usize, second: usize, gap: f64 },

    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("turning point bracketing failed at energy {energy}")]
    TurningPoint { energy: f64 },

    #[error("quadrature weights do not reproduce the basis normalization (defect {defect:.3e})")]
    QuadratureMismatch { defect: f64 },

    #[error("Fourier cutoff {required} exceeds the allowed maximum {allowed}")]
    CutoffOverflow { required: usize, allowed: usize },

    #[error("truncated Fourier tail {tail:.3e} above tolerance {tol:.3e} at cutoff {cutoff}")]
    FourierTail { tail: f64, tol: f64, cutoff: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("gauge residual {residual:.3e} above tolerance {tol:.3e}; refine the grid or the phase sampling")]
    GaugeResidual { residual: f64, tol: f64 },

    #[error("small divisor {divisor:.3e} below floor {floor:.3e} at (i={i}, j={j}, k={k})")]
    SmallDivisor {
        i: usize,
        j: usize,
        k: Mode,
        divisor: f64,
        floor: f64,
    },

    #[error("KAM iteration failed at step {step}: {reason}")]
    KamFailure {
        step: usize,
        reason: String,
        trace: Vec<StepRecord>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("norm drift {drift:.3e} exceeds {tol:.3e} after dt refinement")]
    NormDrift { drift: f64, tol: f64 },

    #[error("linear algebra: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
