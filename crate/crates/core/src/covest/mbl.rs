//! Cumulative lagged least squares with running-average relaxation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::lag::{HOperators, LagOperators};
use super::param::CovParameterization;
use super::relax::{check_tau, relax};
use super::{lagged_products, StepRecord, UpdateStatus};
use crate::error::{Error, Result};
use crate::linalg::{pinv, PINV_RTOL};

/// The stacked system `𝔥 Λ = 𝔜` built from cumulative sums of innovation
/// products and observation operators, one `m²` block per lag.
#[derive(Debug, Clone)]
pub struct StackedLeastSquares {
    m: usize,
    blocks: usize,
    n_q: usize,
    design: DMatrix<f64>,
    target: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coef: DVector<f64>,
    /// Set when the normal equations were singular.
    pub pseudo_inverse: bool,
}

impl StackedLeastSquares {
    pub fn new(m: usize, lags: usize, n_q: usize, n_r: usize) -> Self {
        let rows = (lags + 1) * m * m;
        Self {
            m,
            blocks: lags + 1,
            n_q,
            design: DMatrix::zeros(rows, n_q + n_r),
            target: DVector::zeros(rows),
        }
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// Adds one time step: `products[l] = v_j v_{j−l}ᵀ` and the matching operators.
    pub fn accumulate(&mut self, products: &[DMatrix<f64>], hops: &HOperators) -> Result<()> {
        let b = self.m * self.m;
        if products.len() != self.blocks || hops.lags() != self.blocks {
            return Err(Error::invalid("accumulate: wrong number of lag blocks"));
        }
        for (l, y) in products.iter().enumerate() {
            add_slice(self.target.rows_mut(l * b, b).as_mut_slice(), y.as_slice());
            let columns = hops.q[l].iter().chain(hops.r[l].iter());
            for (s, h) in columns.enumerate() {
                debug_assert!(s < self.n_q + hops.r[l].len());
                let mut col = self.design.column_mut(s);
                add_slice(col.rows_mut(l * b, b).as_mut_slice(), h.as_slice());
            }
        }
        Ok(())
    }

    /// Minimum-norm least-squares solution. Cholesky on the Jacobi-scaled
    /// normal equations, falling back to the SVD pseudo-inverse when they are
    /// numerically singular.
    pub fn solve(&self) -> LsSolution {
        // an explicit transpose routes the product through the blocked gemm kernel
        let design_t = self.design.transpose();
        let gram = &design_t * &self.design;
        let rhs = &design_t * &self.target;
        solve_normal_equations(&gram, &rhs)
    }
}

fn add_slice(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn solve_normal_equations(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> LsSolution {
    let p = gram.nrows();
    let scale = DVector::from_fn(p, |i, _| {
        let d = gram[(i, i)];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    });
    let scaled = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] * scale[i] * scale[j]);
    if let Some(ch) = scaled.cholesky() {
        let diag = ch.l_dirty().diagonal();
        let pmax = diag.iter().fold(0.0_f64, |m, v| m.max(v * v));
        let pmin = diag.iter().fold(f64::INFINITY, |m, v| m.min(v * v));
        if pmin > PINV_RTOL * pmax {
            let y = ch.solve(&rhs.component_mul(&scale));
            return LsSolution {
                coef: y.component_mul(&scale),
                pseudo_inverse: false,
            };
        }
    }
    LsSolution {
        coef: pinv(gram).matrix * rhs,
        pseudo_inverse: true,
    }
}

#[derive(Debug, Clone)]
pub struct MblEstimator {
    pub lags: usize,
    pub tau: f64,
    pub param: CovParameterization,
    ops: LagOperators,
    ls: StackedLeastSquares,
    innovations: VecDeque<DVector<f64>>,
}

impl MblEstimator {
    pub fn new(param: CovParameterization, gamma: DMatrix<f64>, lags: usize, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        let ops = LagOperators::new(lags, gamma, &param)?;
        let ls = StackedLeastSquares::new(param.r_dim(), lags, param.n_q(), param.n_r());
        Ok(Self {
            lags,
            tau,
            param,
            ops,
            ls,
            innovations: VecDeque::with_capacity(lags + 1),
        })
    }

    pub fn steps_seen(&self) -> usize {
        self.ops.steps_seen()
    }

    pub fn active(&self) -> bool {
        self.ops.steps_seen() > self.lags + 1
    }

    pub fn operators(&self) -> &LagOperators {
        &self.ops
    }

    pub fn system(&self) -> &StackedLeastSquares {
        &self.ls
    }

    pub fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        if rec.v.len() != self.param.r_dim() {
            return Err(Error::invalid("innovation dimension does not match R"));
        }
        self.ops.advance(rec, &self.param)?;
        self.innovations.push_front(rec.v.clone());
        self.innovations.truncate(self.lags + 1);
        if !self.active() {
            return Ok(UpdateStatus::WarmUp);
        }
        let hops = self.ops.build_h_operators(&self.param);
        let products = lagged_products(&self.innovations, self.lags);
        self.ls.accumulate(&products, &hops)?;
        let sol = self.ls.solve();
        let nq = self.param.n_q();
        let nr = self.param.n_r();
        self.param.alpha = relax(&self.param.alpha, &sol.coef.rows(0, nq).into_owned(), self.tau)?;
        self.param.beta = relax(&self.param.beta, &sol.coef.rows(nq, nr).into_owned(), self.tau)?;
        Ok(if sol.pseudo_inverse {
            UpdateStatus::PseudoInverse
        } else {
            UpdateStatus::Updated
        })
    }
}
