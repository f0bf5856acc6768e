//! Fixtures shared by the benchmarks.

use enkf_qr::covest::param::diagonal_bases;
use enkf_qr::covest::{CovParameterization, StepRecord};
use enkf_qr::etkf::Ensemble;
use enkf_qr::rng::{standard_normal_mat, standard_normal_vec, stream_rng};
use enkf_qr::{DMatrix, DVector};

/// A fully observed `m`-dimensional system with diagonal `Q` and `R` bases.
pub fn diagonal_param(m: usize) -> CovParameterization {
    CovParameterization::from_guess(
        diagonal_bases(m),
        diagonal_bases(m),
        &(DMatrix::identity(m, m) * 0.5),
        &DMatrix::identity(m, m),
    )
    .expect("diagonal bases are independent")
}

/// Plausible filter records for an `m`-dimensional fully observed system.
pub fn records(m: usize, count: usize, seed: u64) -> Vec<StepRecord> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let f = DMatrix::identity(m, m) * 0.9 + standard_normal_mat(&mut rng, m, m) * (0.1 / (m as f64).sqrt());
            let b_f = DMatrix::identity(m, m) * 1.5;
            let innov_cov = &b_f + DMatrix::identity(m, m);
            let k = &b_f * innov_cov.clone().try_inverse().expect("diagonal");
            StepRecord {
                v: standard_normal_vec(&mut rng, m),
                h: DMatrix::identity(m, m),
                b_a: &b_f - &k * &b_f,
                k,
                b_f,
                innov_cov,
                transitions: vec![f],
            }
        })
        .collect()
}

pub fn ensemble(n: usize, size: usize, seed: u64) -> Ensemble {
    let mut rng = stream_rng(seed, 1);
    Ensemble::sample(&mut rng, &DVector::zeros(n), &DMatrix::identity(n, n), size).expect("identity covariance")
}
