//! Dense linear-algebra helpers shared by the filters and estimators.
//!
//! Everything here works on `nalgebra` dynamic matrices. Covariance routines
//! assume symmetric input and symmetrize their output.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by every pseudo-inverse in the crate.
pub const PINV_RTOL: f64 = 1e-10;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = a.clone();
    symmetrize_mut(&mut s);
    s
}

pub fn symmetrize_mut(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for j in 0..n {
        for i in (j + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Moore-Penrose pseudo-inverse together with the effective rank it used.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Ratio of the largest to the smallest retained singular value.
    pub condition: f64,
}

/// Pseudo-inverse via SVD, truncating singular values below `rtol * sigma_max`.
pub fn pinv_with_tol(a: &DMatrix<f64>, rtol: f64) -> PseudoInverse {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return PseudoInverse {
            matrix: DMatrix::zeros(c, r),
            rank: 0,
            condition: 1.0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed u");
    let v_t = svd.v_t.as_ref().expect("svd computed v_t");
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rtol * smax;
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    let mut smin = f64::INFINITY;
    for (k, &sk) in s.iter().enumerate() {
        if sk > cutoff && sk > 0.0 {
            rank += 1;
            smin = smin.min(sk);
            // out += v_k * u_kᵀ / s_k
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out.ger(1.0 / sk, &vk, &uk, 1.0);
        }
    }
    let condition = if rank == 0 { f64::INFINITY } else { smax / smin };
    PseudoInverse {
        matrix: out,
        rank,
        condition,
    }
}

pub fn pinv(a: &DMatrix<f64>) -> PseudoInverse {
    pinv_with_tol(a, PINV_RTOL)
}

/// Symmetric eigen-decomposition of a (symmetrized) matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(a))
}

fn clamp_scale(values: &DVector<f64>) -> f64 {
    values.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

/// Symmetric square root `S` with `S Sᵀ = A` for a positive semi-definite `A`.
///
/// Eigenvalues in `[-tol·max(1, |λ|max), 0)` are treated as roundoff and
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(a);
    let scale = clamp_scale(&eig.eigenvalues);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol * scale {
            return Err(Error::InvalidCovariance(format!(
                "eigenvalue {v:.3e} below tolerance {:.1e}",
                -tol * scale
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let scaled = q * DMatrix::from_diagonal(&roots);
    let mut s = &scaled * q.transpose();
    symmetrize_mut(&mut s);
    Ok(s)
}

/// Replaces every eigenvalue below `floor` by `floor`.
pub fn clamp_eigenvalues(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = sym_eigen(a);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return symmetrize(a);
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&vals) * q.transpose();
    symmetrize_mut(&mut out);
    out
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigen(a).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(Error::numerical(what, condition_estimate(a))),
    }
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(ch) => {
            let mut inv = ch.inverse();
            symmetrize_mut(&mut inv);
            Ok(inv)
        }
        None => Err(Error::numerical(what, condition_estimate(a))),
    }
}

/// 2-norm condition number from the singular values.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let s = a.clone().singular_values();
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// `A M Aᵀ`.
pub fn congruence(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let am = a * m;
    am * a.transpose()
}

/// Frobenius inner product `Σ aᵢⱼ bᵢⱼ`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Column-mean and centered columns of an `n × k` sample matrix.
pub fn center_columns(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = x.ncols();
    let mean = x.column_mean();
    let mut centered = x.clone();
    for j in 0..k {
        let mut col = centered.column_mut(j);
        col -= &mean;
    }
    (mean, centered)
}

/// Returns true when all entries are finite.
pub fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}
