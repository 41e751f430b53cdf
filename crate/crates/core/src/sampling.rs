//! Seeded random directions. Every sampler in the crate draws from a
//! [`ChaCha8Rng`] so that identical seeds reproduce identical numbers on
//! every platform.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut SeededRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Uniformly distributed point on the unit sphere of `R^n`.
pub fn unit_vector(rng: &mut SeededRng, n: usize) -> DVector<f64> {
    loop {
        let v = gaussian(rng, n);
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Point drawn uniformly from the ball of the given radius.
pub fn in_ball(rng: &mut SeededRng, n: usize, radius: f64) -> DVector<f64> {
    let dir = unit_vector(rng, n);
    let u: f64 = rng.random();
    dir * (radius * u.powf(1.0 / n as f64))
}

/// Angle between two unit vectors, accurate for nearly parallel inputs.
pub fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    2.0 * ((a - b).norm() / 2.0).min(1.0).asin()
}
