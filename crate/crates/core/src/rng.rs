//! Seeded random streams.
//!
//! A run has a single 64-bit master seed. Each consumer draws from its own
//! ChaCha stream selected by a fixed index, so adding a consumer never shifts
//! the draws seen by another one.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Stream indices. Per-region LETKF streams start at `REGION_BASE`.
pub mod stream {
    pub const TRUTH_NOISE: u64 = 0;
    pub const OBS_NOISE: u64 = 1;
    pub const ENSEMBLE_INIT: u64 = 2;
    pub const ENSEMBLE_FORECAST: u64 = 3;
    pub const COVARIANCE_DRAW: u64 = 4;
    pub const TRUTH_INIT: u64 = 5;
    pub const BENCH: u64 = 6;
    pub const REGION_BASE: u64 = 1 << 16;
}

pub fn stream_rng(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn standard_normal_mat<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    // column-major fill so the draw order is the storage order
    let data: Vec<f64> = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(r, c, data)
}

/// Orthogonal matrix from the QR factorization of a Gaussian matrix, with the
/// sign convention that makes the distribution Haar.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = standard_normal_mat(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut col = q.column_mut(j);
            col *= -1.0;
        }
    }
    q
}
