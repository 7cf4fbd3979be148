//! Additive noise of exact level δ.

use nalgebra::DVector;

use crate::sampling;

/// `y + δ·u/‖u‖` with `u` standard Gaussian from `seed`, so that
/// `‖y^δ − y‖ = δ` up to rounding.
pub fn add_noise(y: &DVector<f64>, delta: f64, seed: u64) -> DVector<f64> {
    if delta == 0.0 || y.is_empty() {
        return y.clone();
    }
    let mut rng = sampling::rng(seed);
    let mut u = sampling::gaussian(&mut rng, y.len());
    while u.norm() == 0.0 {
        u = sampling::gaussian(&mut rng, y.len());
    }
    let n = u.norm();
    y + u * (delta / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_level_is_exact() {
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        for delta in [1e-2, 1e-5] {
            let yd = add_noise(&y, delta, 9);
            assert!(((&yd - &y).norm() - delta).abs() <= 1e-15);
        }
        assert_eq!(add_noise(&y, 1e-3, 4), add_noise(&y, 1e-3, 4));
        assert_ne!(add_noise(&y, 1e-3, 4), add_noise(&y, 1e-3, 5));
    }
}
