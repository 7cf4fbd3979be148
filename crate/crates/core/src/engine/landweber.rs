//! Landweber baseline: `x_{k+1} = x_k + μ·J*(y − F(x_k))`.

use nalgebra::DVector;

use super::config::SolverConfig;
use super::run::{check_inputs, stop_reason};
use super::trace::{IterationTrace, Method, Terminal, TraceRecord};
use crate::error::{Error, Result};
use crate::linalg::half_sq_dist;
use crate::operator::ForwardModel;

/// Default `μ = 0.9/‖J(x0)‖²`.
pub const DEFAULT_STEP_FACTOR: f64 = 0.9;

/// Growth of the residual over its running minimum that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Runs Landweber with the stop rules of `cfg` (`q` and `tol_alpha` unused).
///
/// `step_scale` defaults to `0.9/‖J(x0)‖²` and must satisfy `μ‖J(x0)‖² ≤ 1`.
/// Divergence ends the run with [`Terminal::Diverged`].
pub fn landweber_run(
    model: &ForwardModel,
    x_dagger: Option<&DVector<f64>>,
    y: &DVector<f64>,
    x0: &DVector<f64>,
    step_scale: Option<f64>,
    cfg: &SolverConfig,
) -> Result<IterationTrace> {
    cfg.validate()?;
    check_inputs(model, y, x0, x_dagger)?;
    let jn = model.jacobian_norm_dense(x0)?;
    let mu = match step_scale {
        Some(mu) => mu,
        None if jn > 0.0 => DEFAULT_STEP_FACTOR / (jn * jn),
        None => return Err(Error::ConditionViolated("Jacobian vanishes at the initial guess".into())),
    };
    if !(mu > 0.0) || mu * jn * jn > 1.0 + 1e-12 {
        return Err(Error::ConditionViolated(format!("step scale μ = {mu:e} needs 0 < μ‖J‖² ≤ 1, ‖J‖² = {:e}", jn * jn)));
    }

    let mut trace = IterationTrace::new(Method::Landweber);
    let gamma_of = |x: &DVector<f64>| x_dagger.map(|xd| half_sq_dist(x, xd));
    let mut x = x0.clone();
    let mut r = y - model.apply_forward(&x)?;
    let mut residual = r.norm();
    let mut minimum = residual;
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
        let step = model.jacobian_adjoint_apply(&x, &r)? * mu;
        x += &step;
        let fx = match model.apply_forward(&x) {
            Ok(v) => v,
            Err(e @ Error::DomainViolation { .. }) => {
                trace.terminal = Terminal::DomainViolation;
                trace.failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        };
        if !model.check_domain(&x)? {
            trace.warnings.push(format!("step {} leaves the domain ball", k + 1));
        }
        r = y - fx;
        residual = r.norm();
        trace.records.push(TraceRecord {
            k: k + 1,
            x: x.clone(),
            alpha: None,
            residual,
            gamma: gamma_of(&x),
            step_norm: Some(step.norm()),
            mdp_prime_rel_err: None,
            diagnostics: None,
        });
        if residual > DIVERGENCE_FACTOR * minimum || !residual.is_finite() {
            trace.terminal = Terminal::Diverged;
            trace.failure = Some(Error::DivergenceDetected { residual, minimum });
            break;
        }
        minimum = minimum.min(residual);
    }
    Ok(trace)
}
