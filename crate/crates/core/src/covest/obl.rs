//! Secondary Kalman filter on the covariance coefficients, one analysis per
//! lag per time step.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::lag::{HOperators, LagOperators};
use super::param::CovParameterization;
use super::{lagged_products, StepRecord, UpdateStatus};
use crate::error::{Error, Result};
use crate::linalg::{frob_inner, inverse_spd, symmetrize_mut};

/// Covariance assumed for the error of a lagged innovation product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Unit weights; the update is recursive least squares.
    Identity,
    /// Gaussian fourth-moment approximation `C ⊗ C` built from the running
    /// sample innovation covariance `C`, with the symmetric-subspace
    /// pseudo-inverse at lag zero.
    #[default]
    Kronecker,
}

/// Relative size of the ridge added to a non-positive-definite `C`.
pub const RIDGE_REL: f64 = 1e-8;

/// Kalman filter on `θ = (α ‖ β)` with a static parameter model.
#[derive(Debug, Clone)]
pub struct SecondaryFilter {
    pub theta: DVector<f64>,
    pub p_theta: DMatrix<f64>,
    pub weighting: Weighting,
}

impl SecondaryFilter {
    pub fn new(theta: DVector<f64>, p_theta: DMatrix<f64>, weighting: Weighting) -> Result<Self> {
        let n = theta.len();
        if p_theta.shape() != (n, n) {
            return Err(Error::invalid("P_theta does not match θ"));
        }
        Ok(Self {
            theta,
            p_theta,
            weighting,
        })
    }

    /// Assimilates `y = Σ θₛ Aₛ + e` where `Aₛ` are the lag-`l` operators and
    /// `c_inv` is the inverse innovation covariance (ignored for unit weights).
    pub fn assimilate(&mut self, y: &DMatrix<f64>, ops: &[&DMatrix<f64>], c_inv: Option<&DMatrix<f64>>, lag: usize) {
        let np = self.theta.len();
        debug_assert_eq!(ops.len(), np);
        let weighted: Vec<DMatrix<f64>> = match (self.weighting, c_inv) {
            (Weighting::Kronecker, Some(ci)) => {
                let half = if lag == 0 { 0.5 } else { 1.0 };
                ops.iter().map(|a| (ci * *a * ci) * half).collect()
            }
            _ => ops.iter().map(|a| (*a).clone()).collect(),
        };
        let mut resid = y.clone();
        for (a, t) in ops.iter().zip(self.theta.iter()) {
            resid -= *a * *t;
        }
        let mut info = DMatrix::zeros(np, np);
        let mut grad = DVector::zeros(np);
        for s in 0..np {
            grad[s] = frob_inner(&weighted[s], &resid);
            for t in s..np {
                let v = frob_inner(&weighted[s], ops[t]);
                info[(s, t)] = v;
                info[(t, s)] = v;
            }
        }
        // P⁺ = (I + P M)⁻¹ P
        let lhs = DMatrix::identity(np, np) + &self.p_theta * &info;
        let Some(p_new) = lhs.lu().solve(&self.p_theta) else {
            return;
        };
        let mut p_new = p_new;
        symmetrize_mut(&mut p_new);
        self.theta += &p_new * grad;
        self.p_theta = p_new;
    }
}

#[derive(Debug, Clone)]
pub struct OblEstimator {
    pub lags: usize,
    pub param: CovParameterization,
    pub filter: SecondaryFilter,
    ops: LagOperators,
    innovations: VecDeque<DVector<f64>>,
    c_sum: DMatrix<f64>,
    c_count: f64,
}

impl OblEstimator {
    /// `prior_var` sets `P_θ = prior_var · I`.
    pub fn new(
        param: CovParameterization,
        gamma: DMatrix<f64>,
        lags: usize,
        prior_var: f64,
        weighting: Weighting,
    ) -> Result<Self> {
        if !(prior_var > 0.0) {
            return Err(Error::invalid("OBL prior variance must be positive"));
        }
        let ops = LagOperators::new(lags, gamma, &param)?;
        let np = param.n_p();
        let filter = SecondaryFilter::new(param.theta(), DMatrix::identity(np, np) * prior_var, weighting)?;
        let m = param.r_dim();
        Ok(Self {
            lags,
            param,
            filter,
            ops,
            innovations: VecDeque::with_capacity(lags + 1),
            c_sum: DMatrix::zeros(m, m),
            c_count: 0.0,
        })
    }

    pub fn active(&self) -> bool {
        self.ops.steps_seen() > self.lags + 1
    }

    /// Running sample innovation covariance, seeded with the first
    /// predicted innovation covariance as one pseudo-sample, and ridged
    /// until positive definite.
    pub fn innovation_covariance(&self) -> Result<DMatrix<f64>> {
        let m = self.c_sum.nrows();
        let mut c = &self.c_sum / self.c_count.max(1.0);
        symmetrize_mut(&mut c);
        let mut eps = RIDGE_REL * (c.trace() / m as f64).max(f64::MIN_POSITIVE);
        for _ in 0..40 {
            if c.clone().cholesky().is_some() {
                return Ok(c);
            }
            c += DMatrix::identity(m, m) * eps;
            eps *= 10.0;
        }
        Err(Error::numerical("innovation covariance regularization", f64::INFINITY))
    }

    pub fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        if rec.v.len() != self.param.r_dim() {
            return Err(Error::invalid("innovation dimension does not match R"));
        }
        self.ops.advance(rec, &self.param)?;
        self.innovations.push_front(rec.v.clone());
        self.innovations.truncate(self.lags + 1);
        if self.c_count == 0.0 {
            self.c_sum += &rec.innov_cov;
            self.c_count += 1.0;
        }
        self.c_sum += &rec.v * rec.v.transpose();
        self.c_count += 1.0;
        if !self.active() {
            return Ok(UpdateStatus::WarmUp);
        }
        let hops = self.ops.build_h_operators(&self.param);
        let products = lagged_products(&self.innovations, self.lags);
        let c_inv = match self.filter.weighting {
            Weighting::Kronecker => Some(inverse_spd(&self.innovation_covariance()?, "innovation covariance")?),
            Weighting::Identity => None,
        };
        assimilate_all(&mut self.filter, &products, &hops, c_inv.as_ref());
        self.param.set_theta(&self.filter.theta);
        Ok(UpdateStatus::Updated)
    }
}

/// One secondary analysis per lag, lag zero first.
pub fn assimilate_all(
    filter: &mut SecondaryFilter,
    products: &[DMatrix<f64>],
    hops: &HOperators,
    c_inv: Option<&DMatrix<f64>>,
) {
    for (l, y) in products.iter().enumerate().take(hops.lags()) {
        let ops: Vec<&DMatrix<f64>> = hops.q[l].iter().chain(hops.r[l].iter()).collect();
        filter.assimilate(y, &ops, c_inv, l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weights_reduce_to_recursive_least_squares() {
        // scalar θ, observations y_k = a_k θ + e_k; RLS oracle in closed form
        let data = [(1.0, 2.1), (0.5, 0.9), (-1.5, -3.2), (2.0, 4.05)];
        let (p0, t0) = (3.0, 0.2);
        let mut f = SecondaryFilter::new(
            DVector::from_element(1, t0),
            DMatrix::from_element(1, 1, p0),
            Weighting::Identity,
        )
        .unwrap();
        let mut info = 1.0 / p0;
        let mut wsum = t0 / p0;
        for &(a, y) in &data {
            let am = DMatrix::from_element(1, 1, a);
            f.assimilate(&DMatrix::from_element(1, 1, y), &[&am], None, 1);
            info += a * a;
            wsum += a * y;
            assert!((f.theta[0] - wsum / info).abs() < 1e-12);
            assert!((f.p_theta[(0, 0)] - 1.0 / info).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_prior_ignores_data() {
        let mut f =
            SecondaryFilter::new(DVector::from_element(2, 0.5), DMatrix::zeros(2, 2), Weighting::Identity).unwrap();
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_element(2, 2, 1.0);
        f.assimilate(&DMatrix::from_element(2, 2, 9.0), &[&a, &b], None, 0);
        assert_eq!(f.theta, DVector::from_element(2, 0.5));
    }

    #[test]
    fn kronecker_weight_at_lag_zero_halves_information() {
        let c_inv = DMatrix::identity(1, 1);
        let a = DMatrix::identity(1, 1);
        let mut f0 = SecondaryFilter::new(DVector::zeros(1), DMatrix::identity(1, 1), Weighting::Kronecker).unwrap();
        let mut f1 = f0.clone();
        f0.assimilate(&a, &[&a], Some(&c_inv), 0);
        f1.assimilate(&a, &[&a], Some(&c_inv), 1);
        assert!((f0.p_theta[(0, 0)] - 1.0 / 1.5).abs() < 1e-14);
        assert!((f1.p_theta[(0, 0)] - 0.5).abs() < 1e-14);
    }
}
