//! Separate zero-lag `R` and one-lag `Q` regressions with running-average
//! relaxation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::lag::TransitionChain;
use super::param::CovParameterization;
use super::relax::{check_tau, relax};
use super::{StepRecord, UpdateStatus};
use crate::error::{Error, Result};
use crate::linalg::{congruence, pinv, symmetrize_mut};

#[derive(Debug, Clone)]
pub struct BsEstimator {
    pub tau: f64,
    /// Count the propagated posterior term once per `Q` basis instead of once.
    pub btilde_per_basis: bool,
    pub param: CovParameterization,
    gamma: DMatrix<f64>,
    /// Newest first; at most two records.
    memory: VecDeque<StepRecord>,
    updates: usize,
}

/// One-lag regression for `Q`: target and per-basis regressors.
#[derive(Debug, Clone)]
pub struct QRegression {
    pub target: DMatrix<f64>,
    pub regressors: Vec<DMatrix<f64>>,
}

impl BsEstimator {
    pub fn new(param: CovParameterization, gamma: DMatrix<f64>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        if gamma.ncols() != param.q_dim() {
            return Err(Error::invalid("Γ does not match the Q dimension"));
        }
        Ok(Self {
            tau,
            btilde_per_basis: false,
            param,
            gamma,
            memory: VecDeque::with_capacity(2),
            updates: 0,
        })
    }

    pub fn active(&self) -> bool {
        self.updates > 0
    }

    /// `v vᵀ − H B_f Hᵀ`.
    pub fn r_draw(rec: &StepRecord) -> DMatrix<f64> {
        let mut r = &rec.v * rec.v.transpose() - congruence(&rec.h, &rec.b_f);
        symmetrize_mut(&mut r);
        r
    }

    /// Builds the `Q` regression at the newest record `now` from the two
    /// previous records.
    pub fn q_regression(&self, now: &StepRecord, prev: &StepRecord, prev2: &StepRecord) -> Result<QRegression> {
        let chain_now = TransitionChain::new(&now.transitions, &self.gamma)?;
        let chain_prev = TransitionChain::new(&prev.transitions, &self.gamma)?;
        let hf = &now.h * &chain_now.full;
        let vv = &prev.v * prev.v.transpose();
        let propagated = congruence(&chain_prev.full, &prev2.b_a);
        let weight = if self.btilde_per_basis {
            self.param.n_q() as f64
        } else {
            1.0
        };
        let h_prev_t = prev.h.transpose();
        let target = &now.v * prev.v.transpose() + &hf * &prev.k * vv - (&hf * propagated * &h_prev_t) * weight;
        let regressors = (0..self.param.n_q())
            .map(|s| &hf * chain_prev.noise_covariance(&self.param, s) * &h_prev_t)
            .collect();
        Ok(QRegression { target, regressors })
    }

    pub fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        if rec.v.len() != self.param.r_dim() {
            return Err(Error::invalid("innovation dimension does not match R"));
        }
        if self.memory.len() < 2 {
            self.memory.push_front(rec.clone());
            return Ok(UpdateStatus::WarmUp);
        }
        let reg = self.q_regression(rec, &self.memory[0], &self.memory[1]);
        self.memory.push_front(rec.clone());
        self.memory.truncate(2);
        let reg = reg?;

        let nq = self.param.n_q();
        let a = DMatrix::from_fn(reg.target.len(), nq, |i, s| reg.regressors[s].as_slice()[i]);
        let p = pinv(&a);
        if p.rank < nq {
            return Err(Error::Underdetermined {
                rank: p.rank,
                needed: nq,
            });
        }
        let alpha_draw = p.matrix * DVector::from_column_slice(reg.target.as_slice());
        let beta_draw = self.param.project_r(&Self::r_draw(rec))?;
        self.param.alpha = relax(&self.param.alpha, &alpha_draw, self.tau)?;
        self.param.beta = relax(&self.param.beta, &beta_draw, self.tau)?;
        self.updates += 1;
        Ok(UpdateStatus::Updated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covest::param::diagonal_bases;
    use crate::models::LinearModel;

    fn rec(v: &[f64], h: DMatrix<f64>, b_f: DMatrix<f64>) -> StepRecord {
        let n = h.ncols();
        let m = h.nrows();
        StepRecord {
            v: DVector::from_column_slice(v),
            h,
            k: DMatrix::zeros(n, m),
            b_f: b_f.clone(),
            b_a: b_f,
            innov_cov: DMatrix::identity(m, m),
            transitions: vec![DMatrix::identity(n, n)],
        }
    }

    #[test]
    fn scalar_r_draw() {
        let r = BsEstimator::r_draw(&rec(&[2f64.sqrt()], DMatrix::identity(1, 1), DMatrix::identity(1, 1)));
        assert!((r[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_prior_r_draw_is_outer_product() {
        let r = BsEstimator::r_draw(&rec(&[1.0, -2.0], DMatrix::identity(2, 2), DMatrix::zeros(2, 2)));
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 4.0]));
    }

    #[test]
    fn partial_observation_is_underdetermined() {
        let model = LinearModel::benchmark_2d(false);
        let p = CovParameterization::new(
            diagonal_bases(2),
            diagonal_bases(1),
            DVector::from_element(2, 1.0),
            DVector::from_element(1, 0.5),
        )
        .unwrap();
        let mut est = BsEstimator::new(p, model.gamma.clone(), 2000.0).unwrap();
        let mut r = rec(&[0.3], model.h.clone(), DMatrix::identity(2, 2));
        r.transitions = vec![model.f.clone()];
        r.k = DMatrix::from_column_slice(2, 1, &[0.5, 0.1]);
        assert_eq!(est.update(&r).unwrap(), UpdateStatus::WarmUp);
        assert_eq!(est.update(&r).unwrap(), UpdateStatus::WarmUp);
        assert!(matches!(
            est.update(&r),
            Err(Error::Underdetermined { rank: 1, needed: 2 })
        ));
    }

    #[test]
    fn full_observation_is_determined() {
        let model = LinearModel::benchmark_2d(true);
        let p = CovParameterization::new(
            diagonal_bases(2),
            diagonal_bases(2),
            DVector::from_element(2, 1.0),
            DVector::from_element(2, 0.5),
        )
        .unwrap();
        let mut est = BsEstimator::new(p, model.gamma.clone(), 1.0).unwrap();
        let mut r = rec(&[0.3, -0.2], model.h.clone(), DMatrix::identity(2, 2));
        r.transitions = vec![model.f.clone()];
        for _ in 0..3 {
            est.update(&r).unwrap();
        }
        assert!(est.active());
    }
}
