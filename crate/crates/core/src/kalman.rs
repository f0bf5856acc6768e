//! Classical Kalman filter: analysis at observation times and an N-step
//! covariance forecast between them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{congruence, inverse_spd, symmetrize_mut};
use crate::models::LinearModel;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x_f: DVector<f64>,
    pub b_f: DMatrix<f64>,
    pub x_a: DVector<f64>,
    pub b_a: DMatrix<f64>,
    /// Gain of the most recent analysis (n × m).
    pub k: DMatrix<f64>,
    /// Innovation of the most recent analysis.
    pub v: DVector<f64>,
}

impl KalmanState {
    /// A prior with no analysis performed yet.
    pub fn from_prior(x_f: DVector<f64>, b_f: DMatrix<f64>) -> Self {
        let n = x_f.len();
        Self {
            x_a: x_f.clone(),
            b_a: b_f.clone(),
            x_f,
            b_f,
            k: DMatrix::zeros(n, 0),
            v: DVector::zeros(0),
        }
    }
}

/// Innovation covariance `H B_f Hᵀ + R` and its inverse.
fn innovation_inverse(b_f: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut s = congruence(h, b_f) + r;
    symmetrize_mut(&mut s);
    inverse_spd(&s, "innovation covariance")
}

pub fn kf_analysis(
    state: &KalmanState,
    y: &DVector<f64>,
    h: &DMatrix<f64>,
    r_used: &DMatrix<f64>,
) -> Result<KalmanState> {
    let n = state.x_f.len();
    let m = y.len();
    if h.shape() != (m, n) || r_used.shape() != (m, m) || state.b_f.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "kf_analysis: H {:?}, R {:?}, B_f {:?} inconsistent with n={n}, m={m}",
            h.shape(),
            r_used.shape(),
            state.b_f.shape()
        )));
    }
    let s_inv = innovation_inverse(&state.b_f, h, r_used)?;
    let k = &state.b_f * h.transpose() * s_inv;
    let v = y - h * &state.x_f;
    let x_a = &state.x_f + &k * &v;
    let mut b_a = (DMatrix::identity(n, n) - &k * h) * &state.b_f;
    symmetrize_mut(&mut b_a);
    Ok(KalmanState {
        x_f: state.x_f.clone(),
        b_f: state.b_f.clone(),
        x_a,
        b_a,
        k,
        v,
    })
}

/// Propagates the posterior `n_steps` integration steps, adding `Γ Q Γᵀ` at
/// every step. The returned state carries the new prior in `x_f`, `b_f`.
pub fn kf_forecast(
    state: &KalmanState,
    model: &LinearModel,
    q_used: &DMatrix<f64>,
    n_steps: usize,
) -> Result<KalmanState> {
    if n_steps == 0 {
        return Err(Error::invalid("kf_forecast needs N >= 1"));
    }
    let noise = congruence(&model.gamma, q_used);
    let mut x = state.x_a.clone();
    let mut b = state.b_a.clone();
    for _ in 0..n_steps {
        x = &model.f * x;
        b = congruence(&model.f, &b) + &noise;
        symmetrize_mut(&mut b);
    }
    Ok(KalmanState {
        x_f: x,
        b_f: b,
        ..state.clone()
    })
}
