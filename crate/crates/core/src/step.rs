//! One Levenberg–Marquardt update with the regularization parameter chosen
//! by Morozov's discrepancy principle.
//!
//! Everything is solved in data space: the `m × m` Gram matrix `G = JJ*` is
//! assembled once per point, and every trial `α` factors `G + αI`. The step
//! itself is `s = J*(G + αI)⁻¹ r`, which equals `(J*J + αI)⁻¹ J* r`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_sym_eigenvalue, Ldlt};
use crate::operator::ForwardModel;

/// Upper bracket exponents are rounded to integers and the lower end moves by
/// this many binary orders per probe (a factor 2⁻⁸ ≈ 3.9·10⁻³).
const LOWER_PROBE_OCTAVES: f64 = 8.0;
const MAX_LOWER_PROBES: usize = 30;
const MAX_UPPER_DOUBLINGS: usize = 64;
pub const MAX_BISECTION_STEPS: usize = 200;

/// Default relative tolerance on `|φ(α) − q‖r‖|`.
pub const DEFAULT_TOL_ALPHA: f64 = 1e-10;

/// The Gram matrix `JJ*` at a fixed point.
#[derive(Debug, Clone)]
pub struct GramSystem {
    x: DVector<f64>,
    gram: DMatrix<f64>,
    jac_norm_sq: f64,
}

impl GramSystem {
    /// Assembles `JJ*` column by column from `m` adjoint and `m` forward actions.
    pub fn assemble(model: &ForwardModel, x: &DVector<f64>) -> Result<Self> {
        let m = model.dim_y();
        let mut gram = DMatrix::zeros(m, m);
        let mut e = DVector::zeros(m);
        for j in 0..m {
            e[j] = 1.0;
            let col = model.jacobian_apply(x, &model.jacobian_adjoint_apply(x, &e)?)?;
            gram.set_column(j, &col);
            e[j] = 0.0;
        }
        // symmetrize away round-off from the two actions
        let gram = (&gram + gram.transpose()) * 0.5;
        let jac_norm_sq = max_sym_eigenvalue(&gram).max(0.0);
        Ok(Self { x: x.clone(), gram, jac_norm_sq })
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `‖J‖²`, from a dense symmetric eigendecomposition of the Gram matrix.
    pub fn jacobian_norm_sq(&self) -> f64 {
        self.jac_norm_sq
    }

    /// `z = (JJ* + αI)⁻¹ r`
    pub fn solve(&self, alpha: f64, r: &DVector<f64>) -> Result<DVector<f64>> {
        if r.len() != self.gram.nrows() {
            return Err(Error::DimensionMismatch { expected: self.gram.nrows(), found: r.len() });
        }
        if !(alpha > 0.0) {
            return Err(Error::FactorizationFailure { row: 0, pivot: alpha });
        }
        let shifted = self.shifted(alpha);
        let f = Ldlt::factor(&shifted)?;
        Ok(f.solve_refined(&shifted, r))
    }

    fn shifted(&self, alpha: f64) -> DMatrix<f64> {
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += alpha;
        }
        a
    }

    /// `φ(α) = α‖(JJ* + αI)⁻¹ r‖`
    pub fn morozov(&self, alpha: f64, r: &DVector<f64>) -> Result<f64> {
        Ok(alpha * self.solve(alpha, r)?.norm())
    }

    /// Solves `φ(α) = q‖r‖` by bisection on `log₂ α`.
    ///
    /// The bracket top is `2·q/(1−q)·‖J‖²` rounded up to a power of two; the
    /// bottom drops by 2⁻⁸ per probe until `φ` falls below the target.
    pub fn select_alpha(&self, r: &DVector<f64>, q: f64, tol: f64) -> Result<AlphaSelection> {
        check_q(q)?;
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be non-negative, got {tol}")));
        }
        let rn = r.norm();
        if rn == 0.0 {
            return Err(Error::ZeroResidual);
        }
        let target = q * rn;
        if self.jac_norm_sq == 0.0 {
            return Err(Error::RootInfeasible { floor: rn, target });
        }
        let within = |phi: f64| (phi - target).abs() <= tol * target;

        let ceiling = 2.0 * q / (1.0 - q) * self.jac_norm_sq;
        let mut hi = ceiling.log2().ceil();
        let mut phi_hi = self.morozov(hi.exp2(), r)?;
        let mut doublings = 0;
        while phi_hi < target {
            doublings += 1;
            if doublings > MAX_UPPER_DOUBLINGS {
                return Err(Error::NonConvergence { iters: 0, mismatch: (phi_hi - target).abs() / target });
            }
            hi += 1.0;
            phi_hi = self.morozov(hi.exp2(), r)?;
        }
        if within(phi_hi) {
            return Ok(AlphaSelection { alpha: hi.exp2(), phi: phi_hi, target, bisection_steps: 0, probes: 0 });
        }

        let mut lo = hi;
        let mut phi_lo;
        let mut probes = 0;
        loop {
            probes += 1;
            lo -= LOWER_PROBE_OCTAVES;
            phi_lo = match self.morozov(lo.exp2(), r) {
                Ok(v) => v,
                // G + αI lost definiteness in floating point: α is below what
                // the Gram matrix can resolve, so treat φ as bottomed out.
                Err(Error::FactorizationFailure { .. }) => {
                    return Err(Error::RootInfeasible { floor: target, target });
                }
                Err(e) => return Err(e),
            };
            if phi_lo < target {
                break;
            }
            if probes >= MAX_LOWER_PROBES {
                return Err(Error::RootInfeasible { floor: phi_lo, target });
            }
        }
        if within(phi_lo) {
            return Ok(AlphaSelection { alpha: lo.exp2(), phi: phi_lo, target, bisection_steps: 0, probes });
        }

        for step in 1..=MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // exponent bracket is down to adjacent floats
                let (alpha, phi) = if (phi_lo - target).abs() <= (phi_hi - target).abs() {
                    (lo.exp2(), phi_lo)
                } else {
                    (hi.exp2(), phi_hi)
                };
                let mismatch = (phi - target).abs() / target;
                if mismatch <= tol.max(64.0 * f64::EPSILON) {
                    return Ok(AlphaSelection { alpha, phi, target, bisection_steps: step, probes });
                }
                return Err(Error::NonConvergence { iters: step, mismatch });
            }
            let alpha = mid.exp2();
            let phi = self.morozov(alpha, r)?;
            if within(phi) {
                return Ok(AlphaSelection { alpha, phi, target, bisection_steps: step, probes });
            }
            if phi < target {
                lo = mid;
                phi_lo = phi;
            } else {
                hi = mid;
                phi_hi = phi;
            }
        }
        let mismatch = (phi_lo - target).abs().min((phi_hi - target).abs()) / target;
        Err(Error::NonConvergence { iters: MAX_BISECTION_STEPS, mismatch })
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {q}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// `φ(alpha)`
    pub phi: f64,
    /// `q‖r‖`
    pub target: f64,
    pub bisection_steps: usize,
    pub probes: usize,
}

/// `(JJ* + αI)⁻¹ r` at `x`.
pub fn solve_shifted_system(model: &ForwardModel, x: &DVector<f64>, alpha: f64, r: &DVector<f64>) -> Result<DVector<f64>> {
    GramSystem::assemble(model, x)?.solve(alpha, r)
}

/// `φ(α) = α‖(JJ* + αI)⁻¹ r‖` at `x`.
pub fn morozov_value(model: &ForwardModel, x: &DVector<f64>, alpha: f64, r: &DVector<f64>) -> Result<f64> {
    GramSystem::assemble(model, x)?.morozov(alpha, r)
}

/// The α solving `φ(α) = q‖r‖` to relative tolerance `tol_alpha`.
pub fn select_alpha(model: &ForwardModel, x: &DVector<f64>, r: &DVector<f64>, q: f64, tol_alpha: f64) -> Result<f64> {
    Ok(GramSystem::assemble(model, x)?.select_alpha(r, q, tol_alpha)?.alpha)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub alpha: f64,
    /// `‖y − F(x_k)‖`
    pub residual_norm: f64,
    /// `φ(α) = α‖(JJ* + αI)⁻¹ r‖`
    pub morozov_lhs: f64,
    /// `q‖r‖`
    pub morozov_rhs: f64,
    /// `‖r − J s‖`, the linearized post-step residual
    pub mdp_prime_lhs: f64,
    /// `q/(1−q)·‖J‖²`
    pub alpha_bound: f64,
    /// `q‖r‖ / ‖r − J(x† − x_k)‖`; set only when the true solution is known.
    /// The step satisfies the ω-condition iff this is at least ω.
    pub omega_margin: Option<f64>,
    pub bracket_iters: usize,
    pub step_norm: f64,
}

impl StepDiagnostics {
    /// `|‖r − Js‖ − q‖r‖| / ‖r‖`
    pub fn mdp_prime_rel_err(&self) -> f64 {
        (self.mdp_prime_lhs - self.morozov_rhs).abs() / self.residual_norm
    }

    pub fn omega_condition_holds(&self, omega: f64) -> Option<bool> {
        self.omega_margin.map(|m| m >= omega)
    }
}

#[derive(Debug, Clone)]
pub struct LmStep {
    pub x_next: DVector<f64>,
    pub step: DVector<f64>,
    pub diagnostics: StepDiagnostics,
}

/// `x_next = x + J*(JJ* + αI)⁻¹ r` with `r = y_obs − F(x)` and α from
/// [`select_alpha`].
pub fn lm_step(
    model: &ForwardModel,
    x: &DVector<f64>,
    y_obs: &DVector<f64>,
    q: f64,
    tol_alpha: f64,
) -> Result<(DVector<f64>, StepDiagnostics)> {
    let s = lm_step_detailed(model, x, y_obs, q, tol_alpha, None)?;
    Ok((s.x_next, s.diagnostics))
}

/// [`lm_step`], optionally measuring the ω-condition against a known solution.
pub fn lm_step_detailed(
    model: &ForwardModel,
    x: &DVector<f64>,
    y_obs: &DVector<f64>,
    q: f64,
    tol_alpha: f64,
    truth: Option<&DVector<f64>>,
) -> Result<LmStep> {
    check_q(q)?;
    let fx = model.apply_forward(x)?;
    if y_obs.len() != fx.len() {
        return Err(Error::DimensionMismatch { expected: fx.len(), found: y_obs.len() });
    }
    let r = y_obs - fx;
    let residual_norm = r.norm();
    if residual_norm == 0.0 {
        return Err(Error::ZeroResidual);
    }
    let gram = GramSystem::assemble(model, x)?;
    let sel = gram.select_alpha(&r, q, tol_alpha)?;
    let z = gram.solve(sel.alpha, &r)?;
    let step = model.jacobian_adjoint_apply(x, &z)?;
    let js = model.jacobian_apply(x, &step)?;
    let mdp_prime_lhs = (&r - js).norm();

    let omega_margin = match truth {
        Some(xd) => {
            let lin = (&r - model.jacobian_apply(x, &(xd - x))?).norm();
            Some(if lin == 0.0 { f64::INFINITY } else { sel.target / lin })
        }
        None => None,
    };

    let x_next = x + &step;
    model.ensure_in_domain(&x_next)?;

    let diagnostics = StepDiagnostics {
        alpha: sel.alpha,
        residual_norm,
        morozov_lhs: sel.phi,
        morozov_rhs: sel.target,
        mdp_prime_lhs,
        alpha_bound: q / (1.0 - q) * gram.jacobian_norm_sq(),
        omega_margin,
        bracket_iters: sel.bisection_steps + sel.probes,
        step_norm: step.norm(),
    };
    Ok(LmStep { x_next, step, diagnostics })
}
