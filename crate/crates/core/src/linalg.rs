//! Small dense kernels: a root-free Cholesky (LDLᵀ) for the shifted Gram
//! systems and a couple of norm helpers backed by nalgebra decompositions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `A = L D Lᵀ` with unit lower-triangular `L` and positive diagonal `D`.
///
/// No square roots are taken, so a 1×1 system `[d] z = r` is solved as the
/// single division `r / d`.
#[derive(Debug, Clone)]
pub struct Ldlt {
    // strict lower triangle holds L, diagonal holds D
    packed: DMatrix<f64>,
}

impl Ldlt {
    /// Factors a symmetric matrix. Only the lower triangle is read.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let mut p = DMatrix::<f64>::zeros(n, n);
        let scale = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= p[(j, k)] * p[(j, k)] * p[(k, k)];
            }
            if !(d > scale * f64::EPSILON * 0.5) || !d.is_finite() {
                return Err(Error::FactorizationFailure { row: j, pivot: d });
            }
            p[(j, j)] = d;
            for i in (j + 1)..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= p[(i, k)] * p[(j, k)] * p[(k, k)];
                }
                p[(i, j)] = v / d;
            }
        }
        Ok(Self { packed: p })
    }

    pub fn dim(&self) -> usize {
        self.packed.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let p = &self.packed;
        let mut z = b.clone();
        for i in 0..n {
            let mut v = z[i];
            for k in 0..i {
                v -= p[(i, k)] * z[k];
            }
            z[i] = v;
        }
        for i in 0..n {
            z[i] /= p[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in (i + 1)..n {
                v -= p[(k, i)] * z[k];
            }
            z[i] = v;
        }
        z
    }

    /// Solve followed by one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut z = self.solve(b);
        let resid = b - a * &z;
        if resid.iter().any(|v| *v != 0.0) {
            z += self.solve(&resid);
        }
        z
    }
}

/// Largest singular value of a dense matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0_f64, |m, s| m.max(*s))
}

/// Smallest singular value (over `min(rows, cols)` values).
pub fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().fold(f64::INFINITY, |m, s| m.min(*s))
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn max_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    match a.nrows() {
        0 => 0.0,
        1 => a[(0, 0)],
        _ => a
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v)),
    }
}

pub(crate) fn half_sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    0.5 * (a - b).norm_squared()
}
