//! Seeded randomness shared by the generators and the trainer.

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numerics::{ComplexMatrix, ComplexVector};
use crate::C64;

/// Generator used everywhere a seed is accepted.
pub type SeededRng = ChaCha8Rng;

/// Deterministic generator for `seed`.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from 𝒞𝒩(0, `variance`): independent real and imaginary parts,
/// each with variance `variance / 2`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

/// Vector of i.i.d. 𝒞𝒩(0, `variance`) entries.
pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> ComplexVector {
    ComplexVector((0..len).map(|_| complex_gaussian(rng, variance)).collect())
}

/// Matrix of i.i.d. 𝒞𝒩(0, `variance`) entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, variance))
}
