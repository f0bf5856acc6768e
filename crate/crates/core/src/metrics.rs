//! Error measures for covariance estimates and state estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Mean relative error of the diagonals of `Q̃` and `R̃`, averaged over all
/// `n + m` diagonal entries.
pub fn mrrmse(q_est: &DMatrix<f64>, r_est: &DMatrix<f64>, q_true: &DMatrix<f64>, r_true: &DMatrix<f64>) -> Result<f64> {
    if q_est.shape() != q_true.shape() || r_est.shape() != r_true.shape() {
        return Err(Error::invalid("mrrmse: estimate and truth shapes differ"));
    }
    let n = q_true.nrows();
    let m = r_true.nrows();
    if n + m == 0 {
        return Err(Error::invalid("mrrmse: nothing to compare"));
    }
    let mut total = 0.0;
    for (est, truth) in [(q_est, q_true), (r_est, r_true)] {
        for i in 0..truth.nrows() {
            let t = truth[(i, i)];
            if t == 0.0 {
                return Err(Error::invalid("mrrmse: zero true diagonal entry"));
            }
            total += (est[(i, i)] - t).abs() / t.abs();
        }
    }
    Ok(total / (n + m) as f64)
}

/// One run's sequence of `(Q_k, R_k)` estimates.
pub type EstimateSeries = [(DMatrix<f64>, DMatrix<f64>)];

/// RMSE and MMAB over the last `window` entries of each run.
///
/// RMSE is the root of the run- and window-averaged `‖Q_k−Q‖² + ‖R_k−R‖²`
/// (Frobenius). MMAB averages, over runs, the largest entry of
/// `|mean(Q_k) − Q|` and `|mean(R_k) − R|`.
pub fn rmse_mmab(
    runs: &[&EstimateSeries],
    q_true: &DMatrix<f64>,
    r_true: &DMatrix<f64>,
    window: usize,
) -> Result<(f64, f64)> {
    if runs.is_empty() || window == 0 {
        return Err(Error::invalid("rmse_mmab needs at least one run and a positive window"));
    }
    let mut sq = 0.0;
    let mut mab = 0.0;
    for run in runs {
        if run.len() < window {
            return Err(Error::invalid(format!(
                "window {window} exceeds series length {}",
                run.len()
            )));
        }
        let tail = &run[run.len() - window..];
        let mut q_mean = DMatrix::zeros(q_true.nrows(), q_true.ncols());
        let mut r_mean = DMatrix::zeros(r_true.nrows(), r_true.ncols());
        let mut run_sq = 0.0;
        for (q, r) in tail {
            run_sq += (q - q_true).norm_squared() + (r - r_true).norm_squared();
            q_mean += q;
            r_mean += r;
        }
        sq += run_sq / window as f64;
        q_mean /= window as f64;
        r_mean /= window as f64;
        let bias = (q_mean - q_true).abs().max().max((r_mean - r_true).abs().max());
        mab += bias;
    }
    let k = runs.len() as f64;
    Ok(((sq / k).sqrt(), mab / k))
}

/// `100 · ‖estimate − truth‖_F / ‖truth‖_F`.
pub fn error_percentage(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::invalid("error_percentage: shapes differ"));
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::invalid("error_percentage: zero truth"));
    }
    Ok(100.0 * (estimate - truth).norm() / denom)
}

/// Root-mean-square error over components.
pub fn rmse(estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    let n = truth.len().max(1) as f64;
    ((estimate - truth).norm_squared() / n).sqrt()
}

/// Per-step RMSE and its temporal mean.
pub fn state_rmse(analysis: &[DVector<f64>], truth: &[DVector<f64>]) -> Result<(Vec<f64>, f64)> {
    if analysis.len() != truth.len() {
        return Err(Error::invalid("state_rmse: series lengths differ"));
    }
    let series: Vec<f64> = analysis.iter().zip(truth).map(|(a, t)| rmse(a, t)).collect();
    let mean = if series.is_empty() {
        0.0
    } else {
        series.iter().sum::<f64>() / series.len() as f64
    };
    Ok((series, mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn mrrmse_examples() {
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(2, 2) * 0.5;
        assert_eq!(mrrmse(&q, &r, &q, &r).unwrap(), 0.0);
        assert_eq!(mrrmse(&s(2.0), &s(0.5), &s(1.0), &s(0.5)).unwrap(), 0.5);
        let empty = DMatrix::zeros(0, 0);
        let v = mrrmse(&(q.clone() * 1.5), &empty, &q, &empty).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert!(mrrmse(&s(1.0), &s(1.0), &s(0.0), &s(1.0)).is_err());
    }

    #[test]
    fn rmse_mmab_examples() {
        let exact: Vec<_> = (0..5).map(|_| (s(1.0), s(0.5))).collect();
        assert_eq!(rmse_mmab(&[&exact], &s(1.0), &s(0.5), 5).unwrap(), (0.0, 0.0));
        let c = 0.3;
        let off: Vec<_> = (0..5).map(|_| (s(1.0 + c), s(0.5))).collect();
        let (rm, mm) = rmse_mmab(&[&off], &s(1.0), &s(0.5), 4).unwrap();
        assert!((rm - c).abs() < 1e-14 && (mm - c).abs() < 1e-14);
        let under: Vec<_> = (0..5).map(|_| (s(1.0 - c), s(0.5))).collect();
        let (_, mm) = rmse_mmab(&[&off, &under], &s(1.0), &s(0.5), 5).unwrap();
        assert!((mm - c).abs() < 1e-14);
        assert!(rmse_mmab(&[&off], &s(1.0), &s(0.5), 6).is_err());
    }

    #[test]
    fn error_percentage_examples() {
        let t = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        assert_eq!(error_percentage(&t, &t).unwrap(), 0.0);
        let e = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        assert_eq!(error_percentage(&e, &t).unwrap(), 50.0);
        assert_eq!(error_percentage(&(&t * 2.0), &t).unwrap(), 100.0);
        assert!(error_percentage(&t, &DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn state_rmse_examples() {
        let truth = vec![DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]); 3];
        assert_eq!(state_rmse(&truth, &truth).unwrap().1, 0.0);
        let mut shifted = truth.clone();
        for x in &mut shifted {
            x[2] += 1.0;
        }
        let (series, mean) = state_rmse(&shifted, &truth).unwrap();
        assert!(series.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!((mean - 0.5).abs() < 1e-15);
        let perm = |v: &DVector<f64>| DVector::from_column_slice(&[v[3], v[0], v[2], v[1]]);
        let a: Vec<_> = shifted.iter().map(perm).collect();
        let t: Vec<_> = truth.iter().map(perm).collect();
        assert_eq!(state_rmse(&a, &t).unwrap().1, mean);
    }
}
