//! Closed-form constants of the convergence theory: the admissible radius ρ,
//! the contraction constant c, rate bounds, stopping-index bounds and the
//! logarithmic contraction factor q̃.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::operator::StabilityCertificate;

/// Constants of the exact-data convergence result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstantsExact {
    pub rho: f64,
    pub c: f64,
    pub q_condition_ok: bool,
    pub rho_lt_rho_prime: bool,
    pub q: f64,
    pub eps: f64,
}

impl TheoryConstantsExact {
    /// Evaluates every formula without judging the hypotheses.
    pub fn evaluate(cert: &StabilityCertificate, q: f64) -> Self {
        let (l, lh, cf, eps) = (cert.lip_deriv, cert.jac_bound, cert.holder_const, cert.holder_eps);
        let rho = (q / (2.0 * l * cf * cf)).powf(2.0 / eps) / (2.0 * lh * lh);
        let cf_pow = cf.powf(4.0 / (1.0 + eps));
        let c = q * (1.0 - q) / (2.0 * lh * lh * cf_pow);
        Self {
            rho,
            c,
            q_condition_ok: q * (1.0 - q) < 2.0 * lh * lh * cf_pow,
            rho_lt_rho_prime: rho < cert.domain_rho_prime,
            q,
            eps,
        }
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.q_condition_ok && self.rho_lt_rho_prime
    }

    /// γ_k bound after `k` steps.
    pub fn rate_bound(&self, k: usize) -> f64 {
        rate_bound(k, self, self.eps)
    }

    pub fn iterations_for_accuracy(&self, target_gamma: f64) -> usize {
        iterations_for_accuracy(target_gamma, self, self.eps)
    }
}

/// Constants for exact data; fails when `q` violates the q-condition or when
/// ρ does not fit inside the domain ball.
pub fn compute_constants_exact(cert: &StabilityCertificate, q: f64) -> Result<TheoryConstantsExact> {
    cert.validate()?;
    check_q(q)?;
    let tc = TheoryConstantsExact::evaluate(cert, q);
    if !tc.q_condition_ok {
        return Err(Error::ConditionViolated(format!(
            "q(1−q) = {:e} must be below 2L̂²C_F^(4/(1+ε)) = {:e}",
            q * (1.0 - q),
            q * (1.0 - q) / tc.c
        )));
    }
    if !tc.rho_lt_rho_prime {
        return Err(Error::ConditionViolated(format!("ρ = {:e} must be below ρ′ = {:e}", tc.rho, cert.domain_rho_prime)));
    }
    Ok(tc)
}

/// `ρ(1−c)^k` for ε = 1, `(c·k·β + ρ^(−β))^(−1/β)` with `β = (1−ε)/(1+ε)` otherwise.
pub fn rate_bound(k: usize, tc: &TheoryConstantsExact, eps: f64) -> f64 {
    if eps >= 1.0 {
        tc.rho * (1.0 - tc.c).powi(k as i32)
    } else {
        let beta = (1.0 - eps) / (1.0 + eps);
        (tc.c * k as f64 * beta + tc.rho.powf(-beta)).powf(-1.0 / beta)
    }
}

/// Smallest `M` with `rate_bound(M) ≤ target_gamma`.
///
/// The closed form is inverted and then nudged by direct evaluation, so the
/// result is exact with respect to [`rate_bound`] itself.
pub fn iterations_for_accuracy(target_gamma: f64, tc: &TheoryConstantsExact, eps: f64) -> usize {
    if !(target_gamma > 0.0) {
        return usize::MAX;
    }
    if rate_bound(0, tc, eps) <= target_gamma {
        return 0;
    }
    let guess = if eps >= 1.0 {
        (target_gamma / tc.rho).ln() / (1.0 - tc.c).ln()
    } else {
        let beta = (1.0 - eps) / (1.0 + eps);
        (target_gamma.powf(-beta) - tc.rho.powf(-beta)) / (tc.c * beta)
    };
    let mut m = if guess.is_finite() && guess > 0.0 { guess.ceil().min(u32::MAX as f64) as usize } else { 1 };
    while m > 0 && rate_bound(m - 1, tc, eps) <= target_gamma {
        m -= 1;
    }
    while rate_bound(m, tc, eps) > target_gamma {
        m += 1;
    }
    m
}

/// Constants of the noisy-data convergence result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstantsNoisy {
    pub rho: f64,
    /// `R = 3/4 − (1/q + 1/4)/τ`
    pub r: f64,
    /// Per-iteration deduction `q(1−q)τ²R/L̂²` in the final-error constant.
    pub c_prime_coeff: f64,
    pub rho_lt_rho_prime: bool,
    pub q: f64,
    pub tau: f64,
    pub jac_bound: f64,
}

impl TheoryConstantsNoisy {
    pub fn evaluate(cert: &StabilityCertificate, q: f64, tau: f64) -> Self {
        let (l, lh, cf, eps) = (cert.lip_deriv, cert.jac_bound, cert.holder_const, cert.holder_eps);
        let rho = (q / (4.0 * l * cf * cf)).powf(2.0 / eps) / (2.0 * lh * lh);
        let r = noisy_r(q, tau);
        Self {
            rho,
            r,
            c_prime_coeff: q * (1.0 - q) * tau * tau * r / (lh * lh),
            rho_lt_rho_prime: rho < cert.domain_rho_prime,
            q,
            tau,
            jac_bound: lh,
        }
    }

    /// Replaces ρ, e.g. to respect the coupling `ρ ≤ Cδ²`.
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    /// ρ rescaled so that `ρ ≤ Cδ²` with `C = ρ_formula/δ_max²`.
    pub fn rescaled_for_delta(self, delta: f64, delta_max: f64) -> Self {
        let c = self.rho / (delta_max * delta_max);
        let rho = self.rho.min(c * delta * delta);
        self.with_rho(rho)
    }

    /// `⌊L̂²ρ / (q(1−q)R(τδ)²)⌋`
    pub fn kstar_bound(&self, delta: f64) -> u64 {
        let td = self.tau * delta;
        let v = self.jac_bound * self.jac_bound * self.rho / (self.q * (1.0 - self.q) * self.r * td * td);
        if v.is_finite() {
            v.floor().min(u64::MAX as f64) as u64
        } else {
            u64::MAX
        }
    }

    /// `C′ = C − q(1−q)τ²R k*/L̂²`
    pub fn c_prime(&self, c: f64, k_star: usize) -> f64 {
        c - self.c_prime_coeff * k_star as f64
    }
}

/// `R = 3/4 − (1/q + 1/4)/τ`
pub fn noisy_r(q: f64, tau: f64) -> f64 {
    0.75 - (1.0 / q + 0.25) / tau
}

pub fn compute_constants_noisy(cert: &StabilityCertificate, q: f64, tau: f64) -> Result<TheoryConstantsNoisy> {
    cert.validate()?;
    check_q(q)?;
    if !(tau > 1.0) {
        return Err(Error::ConditionViolated(format!("τ must exceed 1, got {tau}")));
    }
    let tc = TheoryConstantsNoisy::evaluate(cert, q, tau);
    if !(tc.r > 0.0) {
        return Err(Error::ConditionViolated(format!("R = 3/4 − (1/q + 1/4)/τ = {:e} must be positive", tc.r)));
    }
    if !tc.rho_lt_rho_prime {
        return Err(Error::ConditionViolated(format!("ρ = {:e} must be below ρ′ = {:e}", tc.rho, cert.domain_rho_prime)));
    }
    Ok(tc)
}

/// Upper bound on the discrepancy stopping index.
pub fn kstar_upper_bound(tc: &TheoryConstantsNoisy, cert: &StabilityCertificate, q: f64, tau: f64, delta: f64) -> u64 {
    let td = tau * delta;
    let lh = cert.jac_bound;
    let v = lh * lh * tc.rho / (q * (1.0 - q) * tc.r * td * td);
    if v.is_finite() {
        v.floor().min(u64::MAX as f64) as u64
    } else {
        u64::MAX
    }
}

/// q̃ together with the logarithmic stopping estimate it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTilde {
    pub value: f64,
    /// `(L·C_F/√2)·e₀`
    pub perturbation: f64,
}

impl QTilde {
    /// `1 + log(‖r₀‖/(τδ)) / log(1/q̃)`, the real-valued bound on k*.
    pub fn kstar_log_bound(&self, initial_residual: f64, tau: f64, delta: f64) -> f64 {
        1.0 + (initial_residual / (tau * delta)).ln() / (1.0 / self.value).ln()
    }

    /// Integer form, rounded up.
    pub fn kstar_estimate(&self, initial_residual: f64, tau: f64, delta: f64) -> u64 {
        self.kstar_log_bound(initial_residual, tau, delta).ceil().max(0.0) as u64
    }
}

/// Upper limit on `q` for the logarithmic stopping estimate.
pub fn qtilde_q_limit(cert: &StabilityCertificate) -> f64 {
    let s = 2.0 * SQRT_2 * cert.jac_bound * cert.holder_const;
    s / (1.0 + s)
}

/// `q̃ = (q + s)/(1 − s)` with `s = (L·C_F/√2)·e₀`.
pub fn qtilde(q: f64, cert: &StabilityCertificate, initial_error: f64) -> Result<QTilde> {
    if cert.holder_eps != 1.0 {
        return Err(Error::ConditionViolated(format!("q̃ needs ε = 1, certificate has ε = {}", cert.holder_eps)));
    }
    let limit = qtilde_q_limit(cert);
    if !(q > 0.0 && q < limit) {
        return Err(Error::ConditionViolated(format!("q = {q} must lie in (0, {limit})")));
    }
    if !(initial_error >= 0.0) {
        return Err(Error::ConditionViolated(format!("initial error must be non-negative, got {initial_error}")));
    }
    let s = cert.lip_deriv * cert.holder_const / SQRT_2 * initial_error;
    if !(s < 1.0) {
        return Err(Error::ConditionViolated(format!("(L·C_F/√2)·e₀ = {s} must be below 1")));
    }
    let value = (q + s) / (1.0 - s);
    if !(value < 1.0) {
        return Err(Error::ConditionViolated(format!("q̃ = {value} is not a contraction")));
    }
    Ok(QTilde { value, perturbation: s })
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::ConditionViolated(format!("q must lie in (0, 1), got {q}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Provenance;
    use approx::assert_relative_eq;

    pub(crate) fn unit_cert(eps: f64) -> StabilityCertificate {
        StabilityCertificate {
            lip_deriv: 1.0,
            jac_bound: 1.0,
            holder_const: 1.0,
            holder_eps: eps,
            domain_rho_prime: 1.0,
            forward_lip: 1.0,
            recon_const: 1.0,
            q_norm: 1.0,
            provenance: Provenance::User,
        }
    }

    #[test]
    fn unit_constants() {
        let tc = compute_constants_exact(&unit_cert(1.0), 0.5).unwrap();
        assert_eq!(tc.rho, 0.03125);
        assert_eq!(tc.c, 0.125);
        assert!(tc.q_condition_ok);

        let tc = compute_constants_exact(&unit_cert(0.5), 0.5).unwrap();
        assert_eq!(tc.rho, 0.001953125);
    }

    #[test]
    fn constants_vanish_with_q() {
        let tc = TheoryConstantsExact::evaluate(&unit_cert(1.0), 1e-6);
        assert!(tc.rho <= 1e-12);
        assert!(tc.c <= 1e-6);
    }

    #[test]
    fn rho_outside_domain_is_rejected() {
        let mut cert = unit_cert(1.0);
        cert.domain_rho_prime = 0.01;
        assert!(matches!(compute_constants_exact(&cert, 0.5), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn noisy_constants() {
        assert_eq!(noisy_r(0.5, 4.0), 0.1875);
        let tc = compute_constants_noisy(&unit_cert(1.0), 0.5, 4.0).unwrap();
        assert_eq!(tc.rho, 0.0078125);
        assert!(matches!(compute_constants_noisy(&unit_cert(1.0), 0.5, 3.0), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn rate_bound_values() {
        let tc = compute_constants_exact(&unit_cert(1.0), 0.5).unwrap();
        assert_eq!(tc.rate_bound(0), tc.rho);
        let mut by_hand = 0.03125;
        for _ in 0..10 {
            by_hand *= 0.875;
        }
        assert_relative_eq!(tc.rate_bound(10), by_hand, max_relative = 1e-14);
        assert!((tc.rate_bound(10) - 0.008_221_1).abs() < 1e-7);
        assert!((tc.rate_bound(11) - 0.007_193_5).abs() < 1e-7);

        let th = TheoryConstantsExact { eps: 0.5, ..tc };
        assert_relative_eq!(th.rate_bound(0), th.rho, max_relative = 1e-14);
    }

    #[test]
    fn iteration_counts() {
        let tc = compute_constants_exact(&unit_cert(1.0), 0.5).unwrap();
        assert_eq!(tc.iterations_for_accuracy(tc.rho), 0);
        assert_eq!(tc.iterations_for_accuracy(0.008), 11);

        let th = TheoryConstantsExact { eps: 0.5, ..tc };
        for target in [1e-2, 3e-3, 1e-4, 1e-6] {
            let m = th.iterations_for_accuracy(target);
            let scan = (0..).find(|&k| th.rate_bound(k) <= target).unwrap();
            assert_eq!(m, scan, "target {target}");
            let closed = ((target.powf(-1.0 / 3.0) - th.rho.powf(-1.0 / 3.0)) * 3.0 / th.c).ceil() as usize;
            assert!(closed.abs_diff(m) <= 1);
        }
    }

    #[test]
    fn kstar_bound_arithmetic() {
        let cert = unit_cert(1.0);
        let tc = TheoryConstantsNoisy { rho: 0.03125, r: 0.1875, ..TheoryConstantsNoisy::evaluate(&cert, 0.5, 4.0) };
        assert_eq!(kstar_upper_bound(&tc, &cert, 0.5, 4.0, 0.01), 416);
        assert_eq!(tc.kstar_bound(0.01), 416);
        let a = 0.03125 / (0.25 * 0.1875 * 0.0016);
        let b: f64 = 0.03125 / (0.25 * 0.1875 * 0.0064);
        assert_eq!(kstar_upper_bound(&tc, &cert, 0.5, 4.0, 0.02), b.floor() as u64);
        assert_relative_eq!(a / b, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn qtilde_values() {
        let cert = unit_cert(1.0);
        assert_eq!(qtilde(0.5, &cert, 0.0).unwrap().value, 0.5);
        let qt = qtilde(0.5, &cert, 0.1).unwrap();
        let s = 0.1 / SQRT_2;
        assert_relative_eq!(qt.value, (0.5 + s) / (1.0 - s), max_relative = 1e-15);
        assert!((qt.value - 0.614_13).abs() < 1e-5);
        let mut prev = 0.0;
        for e in [0.0, 0.05, 0.1, 0.2, 0.3] {
            let v = qtilde(0.5, &cert, e).unwrap().value;
            assert!(v > prev);
            prev = v;
        }
        assert!(qtilde(0.5, &unit_cert(0.5), 0.1).is_err());
        assert!(qtilde(0.99, &cert, 0.0).is_err());
    }
}
