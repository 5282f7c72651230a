//! Seeded random streams. Each Monte Carlo run gets its own ChaCha key and each
//! kind of randomness its own stream within that key, so turning a filter
//! option on or off never shifts the noise another stream produces.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    TruthInit = 0,
    ProcessNoise = 1,
    MeasurementNoise = 2,
    Prior = 3,
}

pub fn stream_rng(seed: u64, run: u32, stream: Stream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&run.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream as u64);
    rng
}

pub fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draw from `𝒩(0, L Lᵀ)` given the lower Cholesky factor `L`.
pub fn correlated_normal(rng: &mut ChaCha8Rng, chol_lower: &DMatrix<f64>) -> DVector<f64> {
    chol_lower * standard_normal(rng, chol_lower.nrows())
}
