use thiserror::Error;

/// Everything that can go wrong inside the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// `excess` is `½‖x − center‖² − ρ′`.
    #[error("point leaves the domain ball (½‖x − center‖² exceeds ρ′ by {excess:e})")]
    DomainViolation { excess: f64 },

    #[error("shifted normal matrix is not positive definite (pivot {pivot:e} at row {row})")]
    FactorizationFailure { row: usize, pivot: f64 },

    /// φ(α) cannot reach q‖r‖ from below: the part of the residual outside the
    /// range of the Jacobian is already at least q‖r‖.
    #[error("no regularization parameter satisfies the discrepancy equation (φ(α→0) ≈ {floor:e} ≥ target {target:e})")]
    RootInfeasible { floor: f64, target: f64 },

    #[error("bisection did not converge after {iters} steps (relative mismatch {mismatch:e})")]
    NonConvergence { iters: usize, mismatch: f64 },

    #[error("residual is zero; the current point already solves the equation")]
    ZeroResidual,

    #[error("convergence hypothesis violated: {0}")]
    ConditionViolated(String),

    #[error("stability fails on this box: distinct points {0} share an image")]
    DegenerateModel(String),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("lattice would hold {count} points, above the cap of {cap}")]
    LatticeTooLarge { count: u128, cap: u128 },

    #[error("no lattice point satisfies the measurement threshold {threshold:e}")]
    NoCandidateFound { threshold: f64 },

    #[error("iteration diverged: residual {residual:e} exceeds 10× its minimum {minimum:e}")]
    DivergenceDetected { residual: f64, minimum: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
