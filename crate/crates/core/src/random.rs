//! Seeded, portable sampling helpers. Every stochastic check in the crate
//! draws from [`Rng`], a ChaCha8 stream, so a seed fully determines output.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::Element;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex number with independent standard normal real and imaginary parts.
pub fn gaussian(rng: &mut Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Element {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn hermitian_matrix(rng: &mut Rng, d: usize) -> Element {
    let g = gaussian_matrix(rng, d, d);
    (&g + g.adjoint()).scale(0.5)
}

pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}
