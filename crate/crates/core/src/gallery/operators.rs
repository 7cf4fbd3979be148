use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::operator::Operator;

/// `F(x) = a·x` on ℝ.
#[derive(Debug, Clone)]
pub struct ScalarLinear {
    pub a: f64,
}

impl Operator for ScalarLinear {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        x * self.a
    }
    fn jacobian_apply(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v * self.a
    }
    fn jacobian_adjoint_apply(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        w * self.a
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.a)
    }
}

/// `F(x)ᵢ = x₁·exp(−x₂·tᵢ)`
#[derive(Debug, Clone)]
pub struct ExpDecay {
    times: Vec<f64>,
}

impl ExpDecay {
    pub fn new(times: Vec<f64>) -> Self {
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

impl Operator for ExpDecay {
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_y(&self) -> usize {
        self.times.len()
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.times.len(), self.times.iter().map(|t| x[0] * (-x[1] * t).exp()))
    }
    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.times.len(),
            self.times.iter().map(|t| {
                let e = (-x[1] * t).exp();
                e * v[0] - x[0] * t * e * v[1]
            }),
        )
    }
    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(2);
        for (i, t) in self.times.iter().enumerate() {
            let e = (-x[1] * t).exp();
            out[0] += e * w[i];
            out[1] -= x[0] * t * e * w[i];
        }
        out
    }
}

/// `F(x) = A x + η·(x ⊙ x)`
#[derive(Debug, Clone)]
pub struct QuadraticPerturbation {
    a: DMatrix<f64>,
    eta: f64,
}

impl QuadraticPerturbation {
    pub fn new(a: DMatrix<f64>, eta: f64) -> Self {
        Self { a, eta }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl Operator for QuadraticPerturbation {
    fn dim_x(&self) -> usize {
        self.a.ncols()
    }
    fn dim_y(&self) -> usize {
        self.a.nrows()
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + x.component_mul(x) * self.eta
    }
    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v + x.component_mul(v) * (2.0 * self.eta)
    }
    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(w) + x.component_mul(w) * (2.0 * self.eta)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.a.clone();
        for i in 0..x.len() {
            j[(i, i)] += 2.0 * self.eta * x[i];
        }
        j
    }
}

/// `F(x) = A x`
#[derive(Debug, Clone)]
pub struct LinearMap {
    a: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a }
    }
}

impl Operator for LinearMap {
    fn dim_x(&self) -> usize {
        self.a.ncols()
    }
    fn dim_y(&self) -> usize {
        self.a.nrows()
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }
    fn jacobian_apply(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }
    fn jacobian_adjoint_apply(&self, _x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(w)
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// Test fixture: correct forward map and Jacobian, adjoint scaled by
/// `1 + error`.
#[derive(Debug, Clone)]
pub struct SabotagedAdjoint {
    inner: Arc<dyn Operator>,
    error: f64,
}

impl SabotagedAdjoint {
    pub fn new(inner: Arc<dyn Operator>, error: f64) -> Self {
        Self { inner, error }
    }
}

impl Operator for SabotagedAdjoint {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.inner.forward(x)
    }
    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.inner.jacobian_apply(x, v)
    }
    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.inner.jacobian_adjoint_apply(x, w) * (1.0 + self.error)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.inner.jacobian(x)
    }
}

/// Counts calls to each action of the wrapped operator.
#[derive(Debug)]
pub struct CountingOperator {
    inner: Arc<dyn Operator>,
    forward: AtomicU64,
    jvp: AtomicU64,
    vjp: AtomicU64,
}

/// Snapshot of [`CountingOperator`] counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallCounts {
    pub forward: u64,
    pub jacobian_apply: u64,
    pub adjoint_apply: u64,
}

impl CallCounts {
    pub fn total(&self) -> u64 {
        self.forward + self.jacobian_apply + self.adjoint_apply
    }
}

impl CountingOperator {
    pub fn new(inner: Arc<dyn Operator>) -> Self {
        Self { inner, forward: AtomicU64::new(0), jvp: AtomicU64::new(0), vjp: AtomicU64::new(0) }
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            forward: self.forward.load(Ordering::Relaxed),
            jacobian_apply: self.jvp.load(Ordering::Relaxed),
            adjoint_apply: self.vjp.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.forward.store(0, Ordering::Relaxed);
        self.jvp.store(0, Ordering::Relaxed);
        self.vjp.store(0, Ordering::Relaxed);
    }
}

impl Operator for CountingOperator {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.inner.dim_y()
    }
    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.forward(x)
    }
    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.jvp.fetch_add(1, Ordering::Relaxed);
        self.inner.jacobian_apply(x, v)
    }
    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.vjp.fetch_add(1, Ordering::Relaxed);
        self.inner.jacobian_adjoint_apply(x, w)
    }
    // default column-by-column assembly so each column is counted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_decay_values() {
        let f = ExpDecay::new(vec![0.0, 1.0]);
        let y = f.forward(&DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(y[0], 1.0);
        assert!((y[1] - (-1.0f64).exp()).abs() < 1e-15);
        let flat = ExpDecay::new(vec![0.0, 0.5, 3.0]).forward(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(flat.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn exp_decay_jacobian_row() {
        let f = ExpDecay::new(vec![1.0]);
        let j = f.jacobian(&DVector::from_vec(vec![1.0, 1.0]));
        let e = (-1.0f64).exp();
        assert!((j[(0, 0)] - e).abs() < 1e-15);
        assert!((j[(0, 1)] + e).abs() < 1e-15);
    }

    #[test]
    fn quadratic_at_origin() {
        let f = QuadraticPerturbation::new(DMatrix::identity(3, 3), 0.1);
        assert_eq!(f.forward(&DVector::zeros(3)), DVector::zeros(3));
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((f.jacobian(&x) * &v - f.jacobian_apply(&x, &v)).norm() < 1e-15);
    }

    #[test]
    fn counting_wrapper_counts() {
        let c = CountingOperator::new(Arc::new(ScalarLinear { a: 3.0 }));
        let x = DVector::from_element(1, 1.0);
        assert_eq!(c.forward(&x)[0], 3.0);
        c.jacobian(&x);
        c.jacobian_adjoint_apply(&x, &x);
        assert_eq!(c.counts(), CallCounts { forward: 1, jacobian_apply: 1, adjoint_apply: 1 });
        c.reset();
        assert_eq!(c.counts().total(), 0);
    }
}
