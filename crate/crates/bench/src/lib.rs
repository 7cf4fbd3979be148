//! Fixtures shared by the kernel benchmarks.

use lmreg_core::gallery::{problem, GalleryOptions, GalleryProblem};
use nalgebra::DVector;

/// A gallery problem with a cheap certificate (the benches never rely on it).
pub fn fixture(id: &str) -> GalleryProblem {
    problem(id, &GalleryOptions { samples: 500, ..GalleryOptions::default() }).expect("gallery problem")
}

/// Residual `y − F(x0)` at the default starting point.
pub fn initial_residual(p: &GalleryProblem) -> DVector<f64> {
    p.exact_data() - p.model.operator().forward(&p.x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        for id in ["scalar_linear", "exp_decay", "exp_decay_pair", "quadratic"] {
            let p = fixture(id);
            assert!(initial_residual(&p).norm() > 0.0, "{id}");
        }
    }
}
