use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::spectral_norm;
use crate::operator::{ForwardModel, Operator};

/// A finite-rank measurement map `Q`, stored as a dense `p × m` matrix onto
/// its range.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    matrix: DMatrix<f64>,
    operator_norm: f64,
}

impl MeasurementOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::InvalidArgument("measurement matrix is empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("measurement matrix has non-finite entries".into()));
        }
        let operator_norm = spectral_norm(&matrix);
        Ok(Self { matrix, operator_norm })
    }

    pub fn identity(m: usize) -> Self {
        Self::new(DMatrix::identity(m, m)).expect("identity is well formed")
    }

    /// Keeps the listed coordinates, in order.
    pub fn selector(m: usize, rows: &[usize]) -> Result<Self> {
        let mut q = DMatrix::zeros(rows.len(), m);
        for (i, &r) in rows.iter().enumerate() {
            if r >= m {
                return Err(Error::InvalidArgument(format!("selected row {r} out of range for dimension {m}")));
            }
            q[(i, r)] = 1.0;
        }
        Self::new(q)
    }

    /// `p` rows of `(1/p)·ones`.
    pub fn averaging(p: usize, m: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(p, m, 1.0 / p as f64))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `‖Q‖`, the largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.operator_norm
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.dim_in(), y.len())?;
        Ok(&self.matrix * y)
    }
}

/// `Q ∘ F`
#[derive(Debug)]
pub struct MeasuredOperator {
    inner: Arc<dyn Operator>,
    q: DMatrix<f64>,
}

impl Operator for MeasuredOperator {
    fn dim_x(&self) -> usize {
        self.inner.dim_x()
    }

    fn dim_y(&self) -> usize {
        self.q.nrows()
    }

    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.q * self.inner.forward(x)
    }

    fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.q * self.inner.jacobian_apply(x, v)
    }

    fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.inner.jacobian_adjoint_apply(x, &self.q.tr_mul(w))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        &self.q * self.inner.jacobian(x)
    }
}

/// The model `Q ∘ F` on the same domain ball.
pub fn compose_measured_model(model: &ForwardModel, q: &MeasurementOperator) -> Result<ForwardModel> {
    ensure_dim(model.dim_y(), q.dim_in())?;
    let op = MeasuredOperator { inner: model.operator().clone(), q: q.matrix.clone() };
    Ok(ForwardModel::new(Arc::new(op), model.center().clone(), model.radius_sq())?.with_policy(model.policy()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Lift;

    /// `x ↦ (x, x²)`
    impl Operator for Lift {
        fn dim_x(&self) -> usize {
            1
        }
        fn dim_y(&self) -> usize {
            2
        }
        fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0], x[0] * x[0]])
        }
        fn jacobian_apply(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![v[0], 2.0 * x[0] * v[0]])
        }
        fn jacobian_adjoint_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, w[0] + 2.0 * x[0] * w[1])
        }
    }

    fn lift() -> ForwardModel {
        ForwardModel::from_operator(Lift, DVector::from_element(1, 0.0), 2.0).unwrap()
    }

    #[test]
    fn identity_composition_is_transparent() {
        let m = lift();
        let c = compose_measured_model(&m, &MeasurementOperator::identity(2)).unwrap();
        for x in [-1.0, 0.3, 1.7] {
            let x = DVector::from_element(1, x);
            assert_eq!(c.apply_forward(&x).unwrap(), m.apply_forward(&x).unwrap());
        }
    }

    #[test]
    fn selector_keeps_first_component() {
        let c = compose_measured_model(&lift(), &MeasurementOperator::selector(2, &[0]).unwrap()).unwrap();
        let y = c.apply_forward(&DVector::from_element(1, 1.5)).unwrap();
        assert_eq!(y.as_slice(), &[1.5]);
        assert!(c.adjoint_test(50, 1).passes(1e-12));
    }

    #[test]
    fn norm_matches_dense_svd() {
        let q = MeasurementOperator::new(DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0])).unwrap();
        let s = q.matrix().clone().svd(false, false).singular_values;
        assert!((q.operator_norm() - s.max()).abs() <= 1e-10);
        assert!(MeasurementOperator::selector(2, &[2]).is_err());
        assert!(compose_measured_model(&lift(), &q).is_err());
    }
}
