use nalgebra::DVector;

use super::config::{SolverConfig, StopMode};
use super::theory::{noisy_r, TheoryConstantsExact, TheoryConstantsNoisy};
use super::trace::{IterationTrace, Method, Terminal, TraceRecord};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::half_sq_dist;
use crate::operator::ForwardModel;
use crate::step::lm_step_detailed;

/// Levenberg–Marquardt on exact data.
///
/// With `tc` and a known truth, the hypothesis report covers the q-condition,
/// `ρ < ρ′` and `½‖x0 − x†‖² ≤ ρ`. A failed hypothesis is recorded, never
/// fatal.
pub fn run_exact(
    model: &ForwardModel,
    x_dagger: Option<&DVector<f64>>,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    tc: Option<&TheoryConstantsExact>,
) -> Result<IterationTrace> {
    let mut trace = IterationTrace::new(Method::LevenbergMarquardt);
    if let Some(tc) = tc {
        trace.hypotheses.push("q_condition", tc.q_condition_ok, format!("c = {:e}", tc.c));
        trace.hypotheses.push("rho_below_rho_prime", tc.rho_lt_rho_prime, format!("ρ = {:e}", tc.rho));
        push_start_hypothesis(&mut trace, x_dagger, x0, tc.rho);
    }
    drive_lm(model, x_dagger, y, x0, cfg, 2.0, trace)
}

/// Levenberg–Marquardt on noisy data, stopped by the discrepancy principle.
///
/// `δ = 0` is accepted and stops only on an exactly vanishing residual.
pub fn run_noisy(
    model: &ForwardModel,
    x_dagger: Option<&DVector<f64>>,
    y_delta: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    tc: Option<&TheoryConstantsNoisy>,
) -> Result<IterationTrace> {
    if cfg.stop_mode != StopMode::Discrepancy {
        return Err(Error::InvalidArgument(format!(
            "noisy runs need discrepancy stopping, got {}",
            cfg.stop_mode.as_str()
        )));
    }
    let mut trace = IterationTrace::new(Method::LevenbergMarquardt);
    let r = tc.map(|t| t.r).unwrap_or_else(|| noisy_r(cfg.q, cfg.tau));
    if let Some(tc) = tc {
        trace.hypotheses.push("r_positive", tc.r > 0.0, format!("R = {:e}", tc.r));
        trace.hypotheses.push("rho_below_rho_prime", tc.rho_lt_rho_prime, format!("ρ = {:e}", tc.rho));
        trace.hypotheses.push("delta_positive", cfg.delta > 0.0, format!("δ = {:e}", cfg.delta));
        push_start_hypothesis(&mut trace, x_dagger, x0, tc.rho);
    }
    drive_lm(model, x_dagger, y_delta, x0, cfg, 1.0 / (1.0 - r), trace)
}

fn push_start_hypothesis(trace: &mut IterationTrace, x_dagger: Option<&DVector<f64>>, x0: &DVector<f64>, rho: f64) {
    match x_dagger {
        Some(xd) if xd.len() == x0.len() => {
            let g0 = half_sq_dist(x0, xd);
            let holds = g0 <= rho;
            trace.hypotheses.push("start_within_rho", holds, format!("½‖x0 − x†‖² = {g0:e}, ρ = {rho:e}"));
            if !holds {
                trace.warnings.push(format!("initial guess outside the convergence ball: ½‖x0 − x†‖² = {g0:e} > ρ = {rho:e}"));
            }
        }
        _ => trace.hypotheses.push("start_within_rho", false, "unverifiable without the planted truth"),
    }
}

pub(crate) fn check_inputs(model: &ForwardModel, y: &DVector<f64>, x0: &DVector<f64>, x_dagger: Option<&DVector<f64>>) -> Result<()> {
    ensure_dim(model.dim_y(), y.len())?;
    ensure_dim(model.dim_x(), x0.len())?;
    if let Some(xd) = x_dagger {
        ensure_dim(model.dim_x(), xd.len())?;
    }
    model.ensure_in_domain(x0)
}

/// Shared stop tests, evaluated before every step. Returns the terminal
/// status if the run should end at the current state.
pub(crate) fn stop_reason(cfg: &SolverConfig, k: usize, residual: f64, gamma: Option<f64>) -> Option<Terminal> {
    if let Some(t) = cfg.discrepancy_threshold() {
        if residual <= t {
            return Some(Terminal::DiscrepancyStop);
        }
    }
    if residual <= cfg.residual_floor {
        return Some(Terminal::ZeroResidual);
    }
    if cfg.stop_mode == StopMode::TargetError {
        if let (Some(g), Some(t)) = (gamma, cfg.target_gamma) {
            if g <= t {
                return Some(Terminal::TargetReached);
            }
        }
    }
    if matches!(cfg.target_residual, Some(t) if residual <= t) {
        return Some(Terminal::TargetReached);
    }
    (k >= cfg.max_iters).then_some(Terminal::BudgetExhausted)
}

fn drive_lm(
    model: &ForwardModel,
    x_dagger: Option<&DVector<f64>>,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    omega: f64,
    mut trace: IterationTrace,
) -> Result<IterationTrace> {
    cfg.validate()?;
    check_inputs(model, y, x0, x_dagger)?;
    if x_dagger.is_some() {
        trace.omega = Some(omega);
    }
    let gamma_of = |x: &DVector<f64>| x_dagger.map(|xd| half_sq_dist(x, xd));

    let mut x = x0.clone();
    let mut residual = (y - model.apply_forward(&x)?).norm();
    trace.records.push(TraceRecord {
        k: 0,
        x: x.clone(),
        alpha: None,
        residual,
        gamma: gamma_of(&x),
        step_norm: None,
        mdp_prime_rel_err: None,
        diagnostics: None,
    });

    loop {
        let k = trace.iterations();
        if let Some(t) = stop_reason(cfg, k, residual, trace.last().gamma) {
            trace.terminal = t;
            if t == Terminal::DiscrepancyStop {
                trace.k_star = Some(k);
            }
            break;
        }
        let step = match lm_step_detailed(model, &x, y, cfg.q, cfg.tol_alpha, x_dagger) {
            Ok(s) => s,
            Err(e) => {
                trace.terminal = match e {
                    Error::ZeroResidual => Terminal::ZeroResidual,
                    Error::RootInfeasible { .. } => Terminal::RootInfeasible,
                    Error::DomainViolation { .. } => Terminal::DomainViolation,
                    Error::NonConvergence { .. } | Error::FactorizationFailure { .. } => Terminal::AlphaNonConvergence,
                    other => return Err(other),
                };
                if trace.terminal != Terminal::ZeroResidual {
                    trace.failure = Some(e);
                }
                break;
            }
        };
        x = step.x_next;
        if !model.check_domain(&x)? {
            trace.warnings.push(format!("step {} leaves the domain ball", k + 1));
        }
        residual = (y - model.apply_forward(&x)?).norm();
        let gamma = gamma_of(&x);
        if let (Some(g), Some(prev)) = (gamma, trace.last().gamma) {
            if g > prev {
                trace.warnings.push(format!("γ increased at step {}: {prev:e} → {g:e}", k + 1));
            }
        }
        let d = step.diagnostics;
        trace.records.push(TraceRecord {
            k: k + 1,
            x: x.clone(),
            alpha: Some(d.alpha),
            residual,
            gamma,
            step_norm: Some(d.step_norm),
            mdp_prime_rel_err: Some(d.mdp_prime_rel_err()),
            diagnostics: Some(d),
        });
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Operator;
    use nalgebra::DMatrix;

    #[derive(Debug)]
    struct Scalar(f64);

    impl Operator for Scalar {
        fn dim_x(&self) -> usize {
            1
        }
        fn dim_y(&self) -> usize {
            1
        }
        fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
            x * self.0
        }
        fn jacobian_apply(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            v * self.0
        }
        fn jacobian_adjoint_apply(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
            w * self.0
        }
        fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, self.0)
        }
    }

    fn scalar() -> ForwardModel {
        ForwardModel::from_operator(Scalar(2.0), DVector::from_element(1, 0.0), 2.0).unwrap()
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn scalar_residuals_halve() {
        let tr = run_exact(&scalar(), Some(&v1(0.5)), &v1(1.0), &v1(0.0), &SolverConfig::exact(0.5, 20), None).unwrap();
        assert_eq!(tr.terminal, Terminal::BudgetExhausted);
        assert_eq!(tr.records.len(), 21);
        for (k, r) in tr.residuals().iter().enumerate() {
            assert_eq!(*r, 0.5f64.powi(k as i32), "k = {k}");
        }
        assert_eq!(tr.omega_verified(), Some(true));
        assert!(tr.warnings.is_empty());
    }

    #[test]
    fn start_at_truth_is_zero_residual() {
        let tr = run_exact(&scalar(), None, &v1(1.0), &v1(0.5), &SolverConfig::exact(0.5, 20), None).unwrap();
        assert_eq!(tr.terminal, Terminal::ZeroResidual);
        assert_eq!(tr.iterations(), 0);
    }

    #[test]
    fn discrepancy_base_case() {
        let cfg = SolverConfig::noisy(0.5, 4.0, 0.5, 20);
        let tr = run_noisy(&scalar(), None, &v1(1.0), &v1(0.0), &cfg, None).unwrap();
        assert_eq!(tr.terminal, Terminal::DiscrepancyStop);
        assert_eq!(tr.k_star, Some(0));
    }

    #[test]
    fn scalar_noisy_stopping_index() {
        // y^δ = 1 + δ with δ = 1e-3; residuals are (1 + δ)·2⁻ᵏ
        let delta = 1e-3;
        let cfg = SolverConfig::noisy(0.5, 4.0, delta, 100);
        let tr = run_noisy(&scalar(), Some(&v1(0.5)), &v1(1.0 + delta), &v1(0.0), &cfg, None).unwrap();
        let k_star = tr.k_star.unwrap();
        let by_hand = (0..).find(|&k| (1.0 + delta) * 0.5f64.powi(k) <= 4.0 * delta).unwrap() as usize;
        assert_eq!(k_star, by_hand);
        assert_eq!(k_star, 8);
        for r in &tr.records[..k_star] {
            assert!(r.residual > 4.0 * delta);
        }
    }

    #[test]
    fn noisy_needs_discrepancy_mode() {
        assert!(run_noisy(&scalar(), None, &v1(1.0), &v1(0.0), &SolverConfig::exact(0.5, 5), None).is_err());
    }

    #[test]
    fn start_outside_ball_is_rejected() {
        let err = run_exact(&scalar(), None, &v1(1.0), &v1(5.0), &SolverConfig::exact(0.5, 5), None).unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }));
    }
}
