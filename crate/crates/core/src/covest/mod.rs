//! Adaptive estimators of the model-noise covariance `Q` and the
//! observation-noise covariance `R` driven by filter innovations.
//!
//! Each estimator consumes one [`StepRecord`] per analysis time and keeps its
//! current coefficients in a [`CovParameterization`].

pub mod bs;
pub mod lag;
pub mod mbl;
pub mod obl;
pub mod param;
pub mod relax;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

pub use bs::BsEstimator;
pub use lag::{propagate_phi, HOperators, LagOperators, TransitionChain};
pub use mbl::{MblEstimator, StackedLeastSquares};
pub use obl::{OblEstimator, SecondaryFilter, Weighting};
pub use param::{Basis, CovParameterization};
pub use relax::relax;

/// What a filter hands to an estimator after each analysis.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Innovation `y − H x_f`.
    pub v: DVector<f64>,
    /// (Linearized) observation operator at this time.
    pub h: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub b_f: DMatrix<f64>,
    pub b_a: DMatrix<f64>,
    /// Predicted innovation covariance used by the analysis.
    pub innov_cov: DMatrix<f64>,
    /// Sub-step transitions from the previous analysis to this one, oldest
    /// first. Empty for the first record.
    pub transitions: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    /// Not enough history yet; coefficients unchanged.
    WarmUp,
    Updated,
    /// The normal equations were singular and the minimum-norm
    /// pseudo-inverse solution was used.
    PseudoInverse,
}

impl UpdateStatus {
    pub fn label(&self) -> &'static str {
        match self {
            UpdateStatus::WarmUp => "warmup",
            UpdateStatus::Updated => "ok",
            UpdateStatus::PseudoInverse => "pinv",
        }
    }
}

pub trait CovarianceEstimator: Send {
    fn name(&self) -> &'static str;

    fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus>;

    fn parameterization(&self) -> &CovParameterization;

    /// True once the estimates may be fed back to the primary filter.
    fn active(&self) -> bool;
}

impl CovarianceEstimator for MblEstimator {
    fn name(&self) -> &'static str {
        "mbl"
    }
    fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        MblEstimator::update(self, rec)
    }
    fn parameterization(&self) -> &CovParameterization {
        &self.param
    }
    fn active(&self) -> bool {
        MblEstimator::active(self)
    }
}

impl CovarianceEstimator for BsEstimator {
    fn name(&self) -> &'static str {
        "bs"
    }
    fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        BsEstimator::update(self, rec)
    }
    fn parameterization(&self) -> &CovParameterization {
        &self.param
    }
    fn active(&self) -> bool {
        BsEstimator::active(self)
    }
}

impl CovarianceEstimator for OblEstimator {
    fn name(&self) -> &'static str {
        "obl"
    }
    fn update(&mut self, rec: &StepRecord) -> Result<UpdateStatus> {
        OblEstimator::update(self, rec)
    }
    fn parameterization(&self) -> &CovParameterization {
        &self.param
    }
    fn active(&self) -> bool {
        OblEstimator::active(self)
    }
}

/// `v_j v_{j−l}ᵀ` for `l = 0..=lags`, newest innovation first in `history`.
pub(crate) fn lagged_products(history: &std::collections::VecDeque<DVector<f64>>, lags: usize) -> Vec<DMatrix<f64>> {
    let now = &history[0];
    (0..=lags).map(|l| now * history[l].transpose()).collect()
}
