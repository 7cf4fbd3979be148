use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::Error;
use crate::step::StepDiagnostics;

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    BudgetExhausted,
    ZeroResidual,
    DiscrepancyStop,
    /// `target_gamma` or `target_residual` reached.
    TargetReached,
    RootInfeasible,
    DomainViolation,
    Diverged,
    AlphaNonConvergence,
}

impl Terminal {
    pub const ALL: [Terminal; 8] = [
        Terminal::BudgetExhausted,
        Terminal::ZeroResidual,
        Terminal::DiscrepancyStop,
        Terminal::TargetReached,
        Terminal::RootInfeasible,
        Terminal::DomainViolation,
        Terminal::Diverged,
        Terminal::AlphaNonConvergence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Terminal::BudgetExhausted => "budget_exhausted",
            Terminal::ZeroResidual => "zero_residual",
            Terminal::DiscrepancyStop => "discrepancy_stop",
            Terminal::TargetReached => "target_reached",
            Terminal::RootInfeasible => "root_infeasible",
            Terminal::DomainViolation => "domain_violation",
            Terminal::Diverged => "diverged",
            Terminal::AlphaNonConvergence => "alpha_nonconvergence",
        }
    }

    /// Ended without a numerical failure.
    pub fn is_clean(&self) -> bool {
        matches!(
            self,
            Terminal::BudgetExhausted | Terminal::ZeroResidual | Terminal::DiscrepancyStop | Terminal::TargetReached
        )
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Terminal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Terminal::ALL.iter().copied().find(|t| t.as_str() == s).ok_or_else(|| format!("unknown terminal status `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    LevenbergMarquardt,
    Landweber,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::LevenbergMarquardt => "levenberg_marquardt",
            Method::Landweber => "landweber",
        }
    }
}

/// State after `k` steps. Row 0 is the initial guess; row `k > 0` also
/// carries the step that produced `x_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub x: DVector<f64>,
    pub alpha: Option<f64>,
    pub residual: f64,
    /// `½‖x_k − x†‖²` when the truth is known.
    pub gamma: Option<f64>,
    pub step_norm: Option<f64>,
    pub mdp_prime_rel_err: Option<f64>,
    pub diagnostics: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub name: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// Convergence hypotheses checked before a run. Rate assertions arm only when
/// the report is non-empty and every entry holds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HypothesisReport {
    pub items: Vec<Hypothesis>,
}

impl HypothesisReport {
    pub fn push(&mut self, name: &'static str, holds: bool, detail: impl Into<String>) {
        self.items.push(Hypothesis { name, holds, detail: detail.into() });
    }

    pub fn armed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|h| h.holds)
    }

    pub fn get(&self, name: &str) -> Option<&Hypothesis> {
        self.items.iter().find(|h| h.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
    pub terminal: Terminal,
    pub k_star: Option<usize>,
    pub hypotheses: HypothesisReport,
    /// ω used for the per-step ω-condition check, when the truth was known.
    pub omega: Option<f64>,
    pub warnings: Vec<String>,
    /// The error that ended the run, for non-clean terminals.
    pub failure: Option<Error>,
}

impl IterationTrace {
    pub(crate) fn new(method: Method) -> Self {
        Self {
            method,
            records: Vec::new(),
            terminal: Terminal::BudgetExhausted,
            k_star: None,
            hypotheses: HypothesisReport::default(),
            omega: None,
            warnings: Vec::new(),
            failure: None,
        }
    }

    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial state")
    }

    pub fn final_x(&self) -> &DVector<f64> {
        &self.last().x
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn gammas(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.gamma).collect()
    }

    /// Every step met the ω-condition. `None` when it was not measured.
    pub fn omega_verified(&self) -> Option<bool> {
        let omega = self.omega?;
        let mut all = true;
        for r in self.records.iter().skip(1) {
            all &= r.diagnostics.as_ref().and_then(|d| d.omega_condition_holds(omega))?;
        }
        Some(all)
    }

    /// First `k` with residual at or below `level`.
    pub fn first_below(&self, level: f64) -> Option<usize> {
        self.records.iter().find(|r| r.residual <= level).map(|r| r.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_names_round_trip() {
        for t in Terminal::ALL {
            assert_eq!(t.as_str().parse::<Terminal>().unwrap(), t);
        }
        assert!("nope".parse::<Terminal>().is_err());
    }

    #[test]
    fn empty_report_is_not_armed() {
        let mut h = HypothesisReport::default();
        assert!(!h.armed());
        h.push("a", true, "");
        assert!(h.armed());
        h.push("b", false, "");
        assert!(!h.armed());
    }
}
