//! Seeded random number generation.
//!
//! Normal samples are drawn with `rand_distr::StandardNormal` from a ChaCha8
//! stream seeded by [`SeedableRng::seed_from_u64`], so experiment outputs
//! are reproducible across platforms.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::trajectory::{TimeGrid, Trajectory};

/// Seeded standard normal sampler.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: ChaCha8Rng,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| self.normal()))
    }
}

/// A random smooth control: each component is
/// `c₀ + c₁ sin(2πt/T) + c₂ cos(πt/T) + c₃ t/T` with standard normal
/// coefficients scaled by `scale`.
pub fn smooth_random_control(
    grid: &TimeGrid,
    width: usize,
    scale: f64,
    sampler: &mut NormalSampler,
) -> Trajectory {
    let coeffs: Vec<[f64; 4]> = (0..width)
        .map(|_| {
            [
                scale * sampler.normal(),
                scale * sampler.normal(),
                scale * sampler.normal(),
                scale * sampler.normal(),
            ]
        })
        .collect();
    let horizon = grid.horizon();
    Trajectory::from_fn(*grid, width, |t| {
        let s = t / horizon;
        DVector::from_iterator(
            width,
            coeffs
                .iter()
                .map(|c| c[0] + c[1] * (2.0 * PI * s).sin() + c[2] * (PI * s).cos() + c[3] * s),
        )
    })
}
