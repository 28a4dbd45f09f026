use thiserror::Error;

/// Errors surfaced by the verification toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point lies outside the domain (distance {dist:.3e} exceeds tolerance {tol:.3e})")]
    OutsideDomain { dist: f64, tol: f64 },

    #[error("projection did not converge after {iterations} iterations (residual {residual:.3e})")]
    ProjectionDidNotConverge { residual: f64, iterations: usize },

    #[error("vanishing gradient on smooth boundary (norm {norm:.3e}); normal direction degenerate")]
    DegenerateGradient { norm: f64 },

    #[error("domain has empty boundary within the sampling box")]
    EmptyBoundary,

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("vector is not in the kernel of the covariance (residual {residual:.3e}, tolerance {tol:.3e})")]
    NotInKernel { residual: f64, tol: f64 },

    #[error("eigenvalue crossing or eigenvector discontinuity inside the finite-difference stencil (gap {gap:.3e})")]
    EigenvalueCrossing { gap: f64 },

    #[error("state-dependent kernel weights are not representable with a state-independent jump measure")]
    StateDependentWeights,

    #[error("bump construction failed to attain its maximum at the base point after {attempts} width halvings")]
    BumpMaxNotAttained { attempts: usize },

    #[error("closed-form bound overflows for these parameters (exponent {exponent:.3e})")]
    BoundOverflow { exponent: f64 },

    #[error("unknown library model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field evaluation produced a non-finite value at the probed point")]
    NonFiniteField,
}

pub type Result<T> = std::result::Result<T, Error>;
