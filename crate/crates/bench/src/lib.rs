//! Fixtures shared by the benchmarks.

use avb::evaluation::SampleSet;
use avb::training::standard_normal;
use avb::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    standard_normal(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols)
}

/// `n` draws from `N(shift, I_d)`.
pub fn gaussian_samples(n: usize, d: usize, shift: f64, seed: u64) -> SampleSet {
    let t = random_matrix(n, d, seed).map(|v| v + shift);
    SampleSet::from_tensor(format!("N({shift}, I)"), &t).expect("finite draws")
}
