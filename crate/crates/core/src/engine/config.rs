use crate::error::{Error, Result};
use crate::step::DEFAULT_TOL_ALPHA;

/// When an iteration run stops, besides the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopMode {
    /// Run all `max_iters` steps (or until the residual vanishes).
    #[default]
    FixedBudget,
    /// Stop once `½‖x_k − x†‖² ≤ target_gamma`; needs the planted truth.
    TargetError,
    /// Stop at the first `k` with `‖y^δ − F(x_k)‖ ≤ τδ`.
    Discrepancy,
}

impl StopMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopMode::FixedBudget => "fixed_budget",
            StopMode::TargetError => "target_error",
            StopMode::Discrepancy => "discrepancy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub q: f64,
    pub tau: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub tol_alpha: f64,
    pub stop_mode: StopMode,
    pub target_gamma: Option<f64>,
    /// A residual at or below this counts as zero. The default `0.0` only
    /// accepts an exact zero.
    pub residual_floor: f64,
    /// Optional early exit once the residual reaches this level.
    pub target_residual: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            q: 0.5,
            tau: 4.0,
            delta: 0.0,
            max_iters: 100,
            tol_alpha: DEFAULT_TOL_ALPHA,
            stop_mode: StopMode::FixedBudget,
            target_gamma: None,
            residual_floor: 0.0,
            target_residual: None,
        }
    }
}

impl SolverConfig {
    pub fn exact(q: f64, max_iters: usize) -> Self {
        Self { q, max_iters, ..Self::default() }
    }

    pub fn noisy(q: f64, tau: f64, delta: f64, max_iters: usize) -> Self {
        Self { q, tau, delta, max_iters, stop_mode: StopMode::Discrepancy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if !(self.tol_alpha >= 0.0) || !self.tol_alpha.is_finite() {
            return bad(format!("tol_alpha must be a non-negative number, got {}", self.tol_alpha));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad(format!("δ must be non-negative, got {}", self.delta));
        }
        if !(self.residual_floor >= 0.0) {
            return bad(format!("residual_floor must be non-negative, got {}", self.residual_floor));
        }
        match self.stop_mode {
            StopMode::Discrepancy if !(self.tau > 1.0) => bad(format!("τ must exceed 1 for discrepancy stopping, got {}", self.tau)),
            StopMode::TargetError if !matches!(self.target_gamma, Some(t) if t > 0.0) => {
                bad("target_error stopping needs a positive target_gamma".into())
            }
            _ => Ok(()),
        }
    }

    /// `τδ` under discrepancy stopping.
    pub fn discrepancy_threshold(&self) -> Option<f64> {
        (self.stop_mode == StopMode::Discrepancy).then_some(self.tau * self.delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SolverConfig::exact(0.5, 10).validate().is_ok());
        assert!(SolverConfig::exact(1.5, 10).validate().is_err());
        assert!(SolverConfig::noisy(0.5, 1.0, 1e-3, 10).validate().is_err());
        assert!(SolverConfig::noisy(0.5, 4.0, 0.0, 10).validate().is_ok());
        let c = SolverConfig { stop_mode: StopMode::TargetError, ..SolverConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn threshold_only_under_discrepancy() {
        assert_eq!(SolverConfig::noisy(0.5, 4.0, 1e-3, 5).discrepancy_threshold(), Some(4e-3));
        assert_eq!(SolverConfig::exact(0.5, 5).discrepancy_threshold(), None);
    }
}
