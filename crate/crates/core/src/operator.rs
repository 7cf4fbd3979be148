//! Forward operators between finite-dimensional Euclidean spaces, the
//! admissible domain ball, and the stability constants that certify them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{half_sq_dist, spectral_norm};
use crate::sampling;

/// A differentiable map `F: ℝⁿ → ℝᵐ` with its Jacobian and adjoint actions.
///
/// Implementations must be pure: the same input always produces the same
/// bit pattern.
pub trait Operator: Send + Sync + fmt::Debug {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn forward(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `F′(x) v`
    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;
    /// `F′(x)* w`
    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64>;

    /// Dense `m × n` Jacobian assembled column by column.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim_x();
        let mut j = DMatrix::zeros(self.dim_y(), n);
        let mut e = DVector::zeros(n);
        for i in 0..n {
            e[i] = 1.0;
            j.set_column(i, &self.jacobian_apply(x, &e));
            e[i] = 0.0;
        }
        j
    }
}

/// What to do when a point falls outside the domain ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DomainPolicy {
    /// Reject with [`Error::DomainViolation`].
    #[default]
    Enforce,
    /// Accept; callers record a warning.
    Warn,
}

/// An operator together with its domain ball `B = {x : ½‖x − center‖² ≤ ρ′}`.
///
/// Cheap to clone; the operator itself is shared.
#[derive(Clone)]
pub struct ForwardModel {
    op: Arc<dyn Operator>,
    center: DVector<f64>,
    radius_sq: f64,
    policy: DomainPolicy,
}

impl fmt::Debug for ForwardModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardModel")
            .field("op", &self.op)
            .field("center", &self.center.as_slice())
            .field("radius_sq", &self.radius_sq)
            .field("policy", &self.policy)
            .finish()
    }
}

impl ForwardModel {
    /// `radius_sq` is ρ′, in units of `½‖·‖²`.
    pub fn new(op: Arc<dyn Operator>, center: DVector<f64>, radius_sq: f64) -> Result<Self> {
        ensure_dim(op.dim_x(), center.len())?;
        if !(radius_sq > 0.0) {
            return Err(Error::InvalidArgument(format!("domain parameter ρ′ must be positive, got {radius_sq}")));
        }
        Ok(Self { op, center, radius_sq, policy: DomainPolicy::Enforce })
    }

    pub fn from_operator<O: Operator + 'static>(op: O, center: DVector<f64>, radius_sq: f64) -> Result<Self> {
        Self::new(Arc::new(op), center, radius_sq)
    }

    pub fn dim_x(&self) -> usize {
        self.op.dim_x()
    }

    pub fn dim_y(&self) -> usize {
        self.op.dim_y()
    }

    pub fn operator(&self) -> &Arc<dyn Operator> {
        &self.op
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    /// Euclidean radius `√(2ρ′)` of the domain ball.
    pub fn radius(&self) -> f64 {
        (2.0 * self.radius_sq).sqrt()
    }

    pub fn policy(&self) -> DomainPolicy {
        self.policy
    }

    pub fn with_policy(mut self, policy: DomainPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Same operator and ρ′, ball moved to `center`.
    pub fn recentered(&self, center: DVector<f64>) -> Result<Self> {
        ensure_dim(self.dim_x(), center.len())?;
        Ok(Self { center, ..self.clone() })
    }

    pub fn with_radius_sq(&self, radius_sq: f64) -> Result<Self> {
        let mut m = Self::new(self.op.clone(), self.center.clone(), radius_sq)?;
        m.policy = self.policy;
        Ok(m)
    }

    /// `½‖x − center‖² ≤ ρ′`.
    pub fn check_domain(&self, x: &DVector<f64>) -> Result<bool> {
        ensure_dim(self.dim_x(), x.len())?;
        Ok(half_sq_dist(x, &self.center) <= self.radius_sq)
    }

    /// Errors only under [`DomainPolicy::Enforce`].
    pub fn ensure_in_domain(&self, x: &DVector<f64>) -> Result<()> {
        if self.check_domain(x)? || self.policy == DomainPolicy::Warn {
            Ok(())
        } else {
            Err(Error::DomainViolation { excess: half_sq_dist(x, &self.center) - self.radius_sq })
        }
    }

    pub fn apply_forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.ensure_in_domain(x)?;
        Ok(self.op.forward(x))
    }

    /// Forward evaluation without the ball check (dimensions still checked).
    pub fn forward_unchecked(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.dim_x(), x.len())?;
        Ok(self.op.forward(x))
    }

    pub fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.dim_x(), x.len())?;
        ensure_dim(self.dim_x(), v.len())?;
        Ok(self.op.jacobian_apply(x, v))
    }

    pub fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.dim_x(), x.len())?;
        ensure_dim(self.dim_y(), w.len())?;
        Ok(self.op.jacobian_adjoint_apply(x, w))
    }

    pub fn jacobian_matrix(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.dim_x(), x.len())?;
        Ok(self.op.jacobian(x))
    }

    /// Power iteration on `J*J` from the normalized all-ones vector.
    ///
    /// Returns a lower bound on `‖F′(x)‖` that increases towards it with `iters`.
    pub fn estimate_jacobian_norm(&self, x: &DVector<f64>, iters: usize) -> Result<f64> {
        if iters == 0 {
            return Err(Error::InvalidArgument("power iteration needs at least one step".into()));
        }
        self.ensure_in_domain(x)?;
        let n = self.dim_x();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut estimate = 0.0_f64;
        for _ in 0..iters {
            let w = self.op.jacobian_adjoint_apply(x, &self.op.jacobian_apply(x, &v));
            let wn = w.norm();
            if wn == 0.0 {
                break;
            }
            estimate = estimate.max(wn.sqrt());
            v = w / wn;
        }
        Ok(estimate)
    }

    /// Central differences; column `i` is `(F(x + h eᵢ) − F(x − h eᵢ)) / 2h`.
    pub fn finite_difference_jacobian(&self, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
        }
        ensure_dim(self.dim_x(), x.len())?;
        let n = self.dim_x();
        let mut jac = DMatrix::zeros(self.dim_y(), n);
        for i in 0..n {
            let mut plus = x.clone();
            plus[i] += h;
            let mut minus = x.clone();
            minus[i] -= h;
            let col = (self.apply_forward(&plus)? - self.apply_forward(&minus)?) / (2.0 * h);
            jac.set_column(i, &col);
        }
        Ok(jac)
    }

    /// Samples `(x, v, w)` with `x` uniform in the ball and reports the worst
    /// scaled mismatch `|⟨Jv, w⟩ − ⟨v, J*w⟩| / (1 + ‖Jv‖‖w‖)`.
    pub fn adjoint_test(&self, samples: usize, seed: u64) -> AdjointReport {
        let mut rng = sampling::rng(seed);
        let mut worst = 0.0_f64;
        for _ in 0..samples {
            let x = sampling::uniform_in_ball(&mut rng, &self.center, self.radius());
            let v = sampling::gaussian(&mut rng, self.dim_x());
            let w = sampling::gaussian(&mut rng, self.dim_y());
            let jv = self.op.jacobian_apply(&x, &v);
            let jtw = self.op.jacobian_adjoint_apply(&x, &w);
            let gap = (jv.dot(&w) - v.dot(&jtw)).abs();
            worst = worst.max(gap / (1.0 + jv.norm() * w.norm()));
        }
        AdjointReport { samples, worst_scaled_gap: worst }
    }

    /// Worst `‖J_fd − J‖_F / (1 + ‖J‖_F)` over points sampled from the ball
    /// (shrunk by `h` so every stencil point stays inside).
    pub fn jacobian_fd_test(&self, samples: usize, seed: u64, h: f64) -> Result<f64> {
        let mut rng = sampling::rng(seed);
        let radius = (self.radius() - h * 1.000_001).max(0.0);
        let mut worst = 0.0_f64;
        for _ in 0..samples {
            let x = sampling::uniform_in_ball(&mut rng, &self.center, radius);
            let fd = self.finite_difference_jacobian(&x, h)?;
            let an = self.op.jacobian(&x);
            worst = worst.max((fd - &an).norm() / (1.0 + an.norm()));
        }
        Ok(worst)
    }

    /// Spectral norm of the dense Jacobian (decomposition oracle).
    pub fn jacobian_norm_dense(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(spectral_norm(&self.jacobian_matrix(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointReport {
    pub samples: usize,
    pub worst_scaled_gap: f64,
}

impl AdjointReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_scaled_gap <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    User,
    OracleEstimated,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::User => "user",
            Provenance::OracleEstimated => "oracle-estimated",
        }
    }
}

/// Constants of the Hölder-stability setting and of the finite-measurement
/// reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    /// L: `‖F′(x) − F′(x̃)‖ ≤ L‖x − x̃‖`
    pub lip_deriv: f64,
    /// L̂: `‖F′(x)‖ ≤ L̂`
    pub jac_bound: f64,
    /// C_F: `(1/√2)‖x − x̃‖ ≤ C_F ‖F(x) − F(x̃)‖^((1+ε)/2)`
    pub holder_const: f64,
    /// ε ∈ (0, 1]
    pub holder_eps: f64,
    /// ρ′: domain ball parameter
    pub domain_rho_prime: f64,
    /// L̃: `‖F(x) − F(x̃)‖ ≤ L̃‖x − x̃‖`
    pub forward_lip: f64,
    /// C̃: `‖x − x̃‖ ≤ 2C̃ ‖Q(F(x)) − Q(F(x̃))‖`
    pub recon_const: f64,
    /// ‖Q‖
    pub q_norm: f64,
    pub provenance: Provenance,
}

impl StabilityCertificate {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L", self.lip_deriv),
            ("L̂", self.jac_bound),
            ("C_F", self.holder_const),
            ("ρ′", self.domain_rho_prime),
            ("L̃", self.forward_lip),
            ("C̃", self.recon_const),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("certificate constant {name} must be positive and finite, got {v}")));
            }
        }
        if !(self.holder_eps > 0.0 && self.holder_eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("Hölder exponent ε must lie in (0, 1], got {}", self.holder_eps)));
        }
        if !(self.q_norm >= 0.0) || !self.q_norm.is_finite() {
            return Err(Error::InvalidArgument(format!("‖Q‖ must be non-negative, got {}", self.q_norm)));
        }
        Ok(())
    }

    /// Hölder exponent `(1 + ε)/2` on the data side of the stability estimate.
    pub fn holder_power(&self) -> f64 {
        0.5 * (1.0 + self.holder_eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[derive(Debug)]
    struct Diag(Vec<f64>);

    impl Operator for Diag {
        fn dim_x(&self) -> usize {
            self.0.len()
        }
        fn dim_y(&self) -> usize {
            self.0.len()
        }
        fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_iterator(x.len(), x.iter().zip(&self.0).map(|(a, b)| a * b))
        }
        fn jacobian_apply(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            self.forward(v)
        }
        fn jacobian_adjoint_apply(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
            self.forward(w)
        }
    }

    #[derive(Debug)]
    struct Square;

    impl Operator for Square {
        fn dim_x(&self) -> usize {
            1
        }
        fn dim_y(&self) -> usize {
            1
        }
        fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
            x.map(|t| t * t)
        }
        fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 2.0 * x[0] * v[0])
        }
        fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 2.0 * x[0] * w[0])
        }
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn diag(d: &[f64], rho_prime: f64) -> ForwardModel {
        ForwardModel::from_operator(Diag(d.to_vec()), DVector::zeros(d.len()), rho_prime).unwrap()
    }

    #[test]
    fn scalar_linear_forward() {
        let m = diag(&[2.0], 10.0);
        assert_eq!(m.apply_forward(&v(&[3.0])).unwrap()[0], 6.0);
        assert!(m.check_domain(m.center()).unwrap());
    }

    #[test]
    fn domain_ball_boundary() {
        let m = diag(&[1.0, 1.0], 1.0);
        assert!(m.check_domain(&v(&[1.0, 1.0])).unwrap());
        assert!(!m.check_domain(&v(&[2.0, 0.0])).unwrap());
        let far = v(&[2.0, 0.0]);
        assert!(matches!(m.apply_forward(&far), Err(Error::DomainViolation { .. })));
        let relaxed = m.clone().with_policy(DomainPolicy::Warn);
        assert!(relaxed.apply_forward(&far).is_ok());
        assert!(matches!(m.check_domain(&v(&[1.0])), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn recentering_keeps_radius() {
        let m = diag(&[1.0, 1.0], 0.5).recentered(v(&[3.0, 3.0])).unwrap();
        assert!(m.check_domain(&v(&[3.0, 3.0])).unwrap());
        assert!(!m.check_domain(&v(&[0.0, 0.0])).unwrap());
        assert_eq!(m.radius_sq(), 0.5);
    }

    #[test]
    fn power_iteration_norms() {
        let m = diag(&[2.0], 10.0);
        let e = m.estimate_jacobian_norm(&v(&[0.0]), 1).unwrap();
        assert!((e - 2.0).abs() <= 1e-12);
        let m = diag(&[1.0, 3.0], 10.0);
        let e = m.estimate_jacobian_norm(&v(&[0.0, 0.0]), 100).unwrap();
        assert_relative_eq!(e, 3.0, epsilon = 1e-8);
        assert!(m.estimate_jacobian_norm(&v(&[0.0, 0.0]), 0).is_err());
    }

    #[test]
    fn finite_differences() {
        let m = diag(&[2.0], 10.0);
        let fd = m.finite_difference_jacobian(&v(&[0.7]), 1e-5).unwrap();
        assert!((fd[(0, 0)] - 2.0).abs() <= 1e-9);
        let sq = ForwardModel::from_operator(Square, v(&[3.0]), 1.0).unwrap();
        let fd = sq.finite_difference_jacobian(&v(&[3.0]), 1e-5).unwrap();
        assert!((fd[(0, 0)] - 6.0).abs() <= 1e-6);
        // stencil leaving the ball
        let tight = ForwardModel::from_operator(Square, v(&[3.0]), 1e-12).unwrap();
        assert!(tight.finite_difference_jacobian(&v(&[3.0]), 1e-5).is_err());
    }

    #[test]
    fn certificate_validation() {
        let mut c = StabilityCertificate {
            lip_deriv: 1.0,
            jac_bound: 1.0,
            holder_const: 1.0,
            holder_eps: 1.0,
            domain_rho_prime: 1.0,
            forward_lip: 1.0,
            recon_const: 1.0,
            q_norm: 1.0,
            provenance: Provenance::User,
        };
        assert!(c.validate().is_ok());
        c.holder_eps = 0.0;
        assert!(c.validate().is_err());
        c.holder_eps = 0.5;
        c.jac_bound = -1.0;
        assert!(c.validate().is_err());
    }
}
