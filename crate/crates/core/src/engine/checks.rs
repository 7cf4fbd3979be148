//! Runtime invariant checks over recorded traces. Each check yields one row
//! of a pass/fail table; checks whose hypotheses failed report `NOT ARMED`.

use std::fmt;

use nalgebra::DVector;

use super::theory::{QTilde, TheoryConstantsExact};
use super::trace::{IterationTrace, Terminal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    NotArmed,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::NotArmed => "NOT ARMED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let outcome = if ok { Outcome::Pass } else { Outcome::Fail };
        Self { name: name.into(), outcome, detail: detail.into() }
    }

    pub fn not_armed(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { name: name.into(), outcome: Outcome::NotArmed, detail: reason.into() }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

impl fmt::Display for CheckRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.outcome {
            Outcome::NotArmed => write!(f, "{}: NOT ARMED ({})", self.name, self.detail),
            o => write!(f, "{}: {} ({})", self.name, o.as_str(), self.detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckTable {
    pub rows: Vec<CheckRow>,
}

impl CheckTable {
    pub fn push(&mut self, row: CheckRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: CheckTable) {
        self.rows.extend(other.rows);
    }

    /// No armed check failed.
    pub fn all_armed_pass(&self) -> bool {
        self.rows.iter().all(|r| r.outcome != Outcome::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| r.outcome == Outcome::Fail)
    }

    pub fn find(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// `check|outcome|detail` lines under a header.
    pub fn render(&self) -> String {
        let mut s = String::from("check|outcome|detail\n");
        for r in &self.rows {
            s.push_str(&format!("{}|{}|{}\n", r.name, r.outcome.as_str(), r.detail));
        }
        s
    }
}

fn steps(trace: &IterationTrace) -> impl Iterator<Item = &crate::step::StepDiagnostics> {
    trace.records.iter().skip(1).filter_map(|r| r.diagnostics.as_ref())
}

fn max_of(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// `|φ(α) − q‖r‖| ≤ tol·q‖r‖` at every step.
pub fn check_morozov(trace: &IterationTrace, tol_alpha: f64) -> CheckRow {
    let name = "morozov equation";
    match max_of(steps(trace).map(|d| (d.morozov_lhs - d.morozov_rhs).abs() / d.morozov_rhs)) {
        Some(dev) => CheckRow::new(name, dev <= tol_alpha, format!("max rel dev {dev:.3e}, tol {tol_alpha:.1e}")),
        None => CheckRow::not_armed(name, "no steps taken"),
    }
}

/// `|‖r − Js‖ − q‖r‖| ≤ tol·‖r‖` at every step.
pub fn check_mdp_prime(trace: &IterationTrace, tol: f64) -> CheckRow {
    let name = "linearized residual = q·residual";
    match max_of(steps(trace).map(|d| d.mdp_prime_rel_err())) {
        Some(dev) => CheckRow::new(name, dev <= tol, format!("max rel dev {dev:.3e}, tol {tol:.1e}")),
        None => CheckRow::not_armed(name, "no steps taken"),
    }
}

/// `α ≤ q/(1−q)·‖J‖²·(1 + 1e-8)`.
pub fn check_alpha_bound(trace: &IterationTrace) -> CheckRow {
    let name = "alpha below q/(1-q)·|J|²";
    match max_of(steps(trace).map(|d| d.alpha / d.alpha_bound)) {
        Some(ratio) => CheckRow::new(name, ratio <= 1.0 + 1e-8, format!("max alpha/bound {ratio:.12}")),
        None => CheckRow::not_armed(name, "no steps taken"),
    }
}

/// Post-step residual over pre-step residual equals `q` (linear problems).
pub fn check_residual_ratio(trace: &IterationTrace, q: f64, tol: f64) -> CheckRow {
    let name = "residual ratio = q";
    let devs = trace.records.windows(2).filter(|w| w[1].alpha.is_some()).map(|w| (w[1].residual / w[0].residual - q).abs());
    match max_of(devs) {
        Some(dev) => CheckRow::new(name, dev <= tol, format!("max dev {dev:.1e}")),
        None => CheckRow::not_armed(name, "no steps taken"),
    }
}

/// `‖x_k − x†‖² − ‖x_{k+1} − x†‖² > ‖x_{k+1} − x_k‖² − 1e-12` on every step
/// whose ω-condition was verified.
pub fn check_error_monotonicity(trace: &IterationTrace, x_dagger: &DVector<f64>) -> CheckRow {
    let name = "error monotonicity";
    let Some(omega) = trace.omega else {
        return CheckRow::not_armed(name, "ω-condition not measured");
    };
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst = f64::INFINITY;
    for w in trace.records.windows(2) {
        let Some(d) = &w[1].diagnostics else { continue };
        if d.omega_condition_holds(omega) != Some(true) {
            skipped += 1;
            continue;
        }
        checked += 1;
        let lhs = (&w[0].x - x_dagger).norm_squared() - (&w[1].x - x_dagger).norm_squared();
        let rhs = (&w[1].x - &w[0].x).norm_squared() - 1e-12;
        worst = worst.min(lhs - rhs);
    }
    if checked == 0 {
        return CheckRow::not_armed(name, format!("no step met the ω-condition (ω = {omega})"));
    }
    CheckRow::new(name, worst > 0.0, format!("{checked} steps, {skipped} without ω-condition, min margin {worst:.3e}"))
}

/// Every step satisfied the ω-condition.
pub fn check_omega(trace: &IterationTrace) -> CheckRow {
    let name = "omega condition";
    let Some(omega) = trace.omega else {
        return CheckRow::not_armed(name, "no planted truth");
    };
    match max_of(steps(trace).filter_map(|d| d.omega_margin).map(|m| -m)) {
        Some(neg) => CheckRow::new(name, -neg >= omega, format!("min margin {:.4}, ω = {omega:.4}", -neg)),
        None => CheckRow::not_armed(name, "no steps taken"),
    }
}

/// γ non-increasing over records `0..=upto` (all records when `None`).
pub fn check_gamma_nonincreasing(trace: &IterationTrace, upto: Option<usize>) -> CheckRow {
    let name = "gamma non-increasing";
    let Some(g) = trace.gammas() else {
        return CheckRow::not_armed(name, "no planted truth");
    };
    let end = upto.map_or(g.len(), |k| (k + 1).min(g.len()));
    let worst = g[..end].windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    if end < 2 {
        return CheckRow::new(name, true, "single state");
    }
    CheckRow::new(name, worst <= 0.0, format!("max increase {worst:.3e} over {} steps", end - 1))
}

/// `γ_k ≤ rate_bound(k)·(1 + 1e-9)` for every recorded `k`.
pub fn check_rate_bound(trace: &IterationTrace, tc: &TheoryConstantsExact, eps: f64, armed: bool) -> CheckRow {
    let name = format!("rate bound (eps = {eps:.4})");
    if !armed {
        return CheckRow::not_armed(name, "hypothesis failed");
    }
    let Some(g) = trace.gammas() else {
        return CheckRow::not_armed(name, "no planted truth");
    };
    let worst = g
        .iter()
        .enumerate()
        .map(|(k, gk)| gk / super::theory::rate_bound(k, tc, eps))
        .fold(0.0_f64, f64::max);
    CheckRow::new(name, worst <= 1.0 + 1e-9, format!("max gamma/bound {worst:.6e} over {} states", g.len()))
}

/// Residual above `τδ` before k*, at or below it at k*.
pub fn check_discrepancy_stop(trace: &IterationTrace, threshold: f64) -> CheckRow {
    let name = "discrepancy stop soundness";
    let Some(k) = trace.k_star else {
        return CheckRow::new(name, false, format!("no stop within budget ({})", trace.terminal));
    };
    let before = trace.records[..k].iter().all(|r| r.residual > threshold);
    let at = trace.records[k].residual <= threshold;
    CheckRow::new(name, before && at, format!("k* = {k}, residual {:.3e}, threshold {threshold:.3e}", trace.records[k].residual))
}

pub fn check_kstar_bound(trace: &IterationTrace, bound: u64, armed: bool) -> CheckRow {
    let name = "k* bound";
    if !armed {
        return CheckRow::not_armed(name, "hypothesis failed");
    }
    match trace.k_star {
        Some(k) => CheckRow::new(name, k as u64 <= bound, format!("k* = {k}, bound {bound}")),
        None => CheckRow::new(name, false, format!("no stop within budget ({})", trace.terminal)),
    }
}

/// Residual ratios up to k* at most `q̃ + 1e-9`.
pub fn check_qtilde_contraction(trace: &IterationTrace, qt: Option<&QTilde>) -> CheckRow {
    let name = "residual ratio <= q~";
    let Some(qt) = qt else {
        return CheckRow::not_armed(name, "hypothesis failed");
    };
    let end = trace.k_star.map_or(trace.records.len(), |k| k + 1);
    let worst = trace.records[..end].windows(2).map(|w| w[1].residual / w[0].residual).fold(0.0_f64, f64::max);
    CheckRow::new(name, worst <= qt.value + 1e-9, format!("max ratio {worst:.6}, q~ = {:.6}", qt.value))
}

/// `k* ≤ 1 + log(‖r₀‖/(τδ))/log(1/q̃)`.
pub fn check_kstar_log(trace: &IterationTrace, qt: Option<&QTilde>, tau: f64, delta: f64) -> CheckRow {
    let name = "k* logarithmic bound";
    let Some(qt) = qt else {
        return CheckRow::not_armed(name, "hypothesis failed");
    };
    let bound = qt.kstar_log_bound(trace.records[0].residual, tau, delta);
    match trace.k_star {
        Some(k) => CheckRow::new(name, k as f64 <= bound, format!("k* = {k}, bound {bound:.4}")),
        None => CheckRow::new(name, false, format!("no stop within budget ({})", trace.terminal)),
    }
}

/// Terminal status is one of the clean ones.
pub fn check_clean_terminal(trace: &IterationTrace) -> CheckRow {
    CheckRow::new("clean termination", trace.terminal.is_clean(), trace.terminal.as_str())
}

/// `Terminal` helper for tables.
pub fn terminal_row(label: &str, t: Terminal) -> CheckRow {
    CheckRow::new(label, t.is_clean(), t.as_str())
}
