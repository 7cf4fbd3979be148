//! Seeded samplers shared by the oracles and the noise generator.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut SeededRng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Uniform draw from the closed Euclidean ball `‖x − center‖ ≤ radius`.
pub fn uniform_in_ball(rng: &mut SeededRng, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = center.len();
    if n == 0 || radius <= 0.0 {
        return center.clone();
    }
    let mut dir = gaussian(rng, n);
    let norm = dir.norm();
    if norm == 0.0 {
        return center.clone();
    }
    dir /= norm;
    let u: f64 = rng.random();
    center + dir * (radius * u.powf(1.0 / n as f64))
}

pub fn uniform_in_box(rng: &mut SeededRng, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        lower.len(),
        lower.iter().zip(upper.iter()).map(|(lo, hi)| {
            if hi > lo {
                rng.random_range(*lo..=*hi)
            } else {
                *lo
            }
        }),
    )
}
