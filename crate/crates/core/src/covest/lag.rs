//! Recursions for the lagged prior-error covariance contributions of each
//! noise basis, and the observation operators built from them.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use super::param::CovParameterization;
use super::StepRecord;
use crate::error::{Error, Result};

/// Products of a cycle's sub-step transitions.
#[derive(Debug, Clone)]
pub struct TransitionChain {
    /// `F_N ⋯ F_1`.
    pub full: DMatrix<f64>,
    /// `P_k Γ` for `k = 1..=N`, with `P_k = F_N ⋯ F_{k+1}` and `P_N = I`.
    pub noise_maps: Vec<DMatrix<f64>>,
}

impl TransitionChain {
    pub fn new(transitions: &[DMatrix<f64>], gamma: &DMatrix<f64>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::invalid("a cycle needs at least one transition"));
        }
        let n = gamma.nrows();
        let mut p = DMatrix::identity(n, n);
        let mut noise_maps = vec![DMatrix::zeros(0, 0); transitions.len()];
        for k in (0..transitions.len()).rev() {
            noise_maps[k] = &p * gamma;
            p = &p * &transitions[k];
        }
        Ok(Self { full: p, noise_maps })
    }

    /// `Σ_k P_k Γ Qₛ Γᵀ P_kᵀ`: prior covariance accumulated over one cycle
    /// from noise with covariance `Qₛ`.
    pub fn noise_covariance(&self, param: &CovParameterization, s: usize) -> DMatrix<f64> {
        let n = self.full.nrows();
        let mut g = DMatrix::zeros(n, n);
        for m in &self.noise_maps {
            param.q_bases()[s].add_congruence(m, 1.0, &mut g);
        }
        g
    }
}

/// Per-lag, per-basis operators mapping `(α, β)` to `E[v_j v_{j−l}ᵀ]`.
#[derive(Debug, Clone)]
pub struct HOperators {
    /// `[l][s]`, `m × m`.
    pub q: Vec<Vec<DMatrix<f64>>>,
    pub r: Vec<Vec<DMatrix<f64>>>,
}

impl HOperators {
    pub fn lags(&self) -> usize {
        self.q.len()
    }

    /// `Σ αₛ 𝓗^Q_{l,s} + Σ βₛ 𝓗^R_{l,s}`.
    pub fn predict(&self, l: usize, param: &CovParameterization) -> DMatrix<f64> {
        let (r, c) = self.q[l][0].shape();
        let mut out = DMatrix::zeros(r, c);
        for (h, a) in self.q[l].iter().zip(param.alpha.iter()) {
            out += h * *a;
        }
        for (h, b) in self.r[l].iter().zip(param.beta.iter()) {
            out += h * *b;
        }
        out
    }
}

/// State of the lagged covariance recursions.
#[derive(Debug, Clone)]
pub struct LagOperators {
    lags: usize,
    gamma: DMatrix<f64>,
    /// `[l][s]`, `n × n`.
    phi_q: Vec<Vec<DMatrix<f64>>>,
    phi_r: Vec<Vec<DMatrix<f64>>>,
    /// `cross[l-1] = U_{j−1} ⋯ U_{j−l+1} S_{j−l}` for `l = 1..=L`.
    cross: Vec<DMatrix<f64>>,
    /// `H_j, H_{j−1}, …`, newest first.
    h_hist: VecDeque<DMatrix<f64>>,
    prev_gain: Option<(DMatrix<f64>, DMatrix<f64>)>,
    steps_seen: usize,
}

impl LagOperators {
    pub fn new(lags: usize, gamma: DMatrix<f64>, param: &CovParameterization) -> Result<Self> {
        let n = gamma.nrows();
        if gamma.ncols() != param.q_dim() {
            return Err(Error::invalid(format!(
                "Γ has {} columns but Q is {}x{}",
                gamma.ncols(),
                param.q_dim(),
                param.q_dim()
            )));
        }
        let zeros = |count: usize| vec![DMatrix::zeros(n, n); count];
        Ok(Self {
            lags,
            phi_q: (0..=lags).map(|_| zeros(param.n_q())).collect(),
            phi_r: (0..=lags).map(|_| zeros(param.n_r())).collect(),
            cross: vec![DMatrix::zeros(n, param.r_dim()); lags],
            h_hist: VecDeque::with_capacity(lags + 1),
            prev_gain: None,
            steps_seen: 0,
            gamma,
        })
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn phi_q(&self, l: usize, s: usize) -> &DMatrix<f64> {
        &self.phi_q[l][s]
    }

    pub fn phi_r(&self, l: usize, s: usize) -> &DMatrix<f64> {
        &self.phi_r[l][s]
    }

    /// Consumes one filter record. The first record only seeds the gain
    /// memory; afterwards the Φ tensors are advanced one cycle.
    pub fn advance(&mut self, rec: &StepRecord, param: &CovParameterization) -> Result<()> {
        let n = self.gamma.nrows();
        if rec.h.ncols() != n || rec.h.nrows() != param.r_dim() {
            return Err(Error::invalid(
                "record H does not match the state/observation dimensions",
            ));
        }
        if let Some((k_prev, h_prev)) = self.prev_gain.take() {
            let chain = TransitionChain::new(&rec.transitions, &self.gamma)?;
            let u = &chain.full * (DMatrix::identity(n, n) - &k_prev * &h_prev);
            let s_mat = &chain.full * &k_prev;
            propagate_phi(&mut self.phi_q, &mut self.phi_r, &u, &s_mat, &chain, param);
            for l in (1..self.lags).rev() {
                self.cross[l] = &u * &self.cross[l - 1];
            }
            if self.lags > 0 {
                self.cross[0] = s_mat;
            }
        }
        self.h_hist.push_front(rec.h.clone());
        self.h_hist.truncate(self.lags + 1);
        self.prev_gain = Some((rec.k.clone(), rec.h.clone()));
        self.steps_seen += 1;
        Ok(())
    }

    /// Observation operators for lags `0..=min(L, history)` at the newest record.
    pub fn build_h_operators(&self, param: &CovParameterization) -> HOperators {
        let available = self.h_hist.len().saturating_sub(1).min(self.lags);
        let h_now = &self.h_hist[0];
        let mut q = Vec::with_capacity(available + 1);
        let mut r = Vec::with_capacity(available + 1);
        for l in 0..=available {
            let h_lag_t = self.h_hist[l].transpose();
            q.push(self.phi_q[l].iter().map(|phi| h_now * phi * &h_lag_t).collect());
            let correction = if l == 0 { None } else { Some(h_now * &self.cross[l - 1]) };
            r.push(
                self.phi_r[l]
                    .iter()
                    .zip(param.r_bases())
                    .map(|(phi, basis)| {
                        let mut out = h_now * phi * &h_lag_t;
                        match &correction {
                            None => out += basis.matrix(),
                            Some(hc) => out -= basis.right_mul(hc),
                        }
                        out
                    })
                    .collect(),
            );
        }
        HOperators { q, r }
    }
}

/// One cycle of the Φ recursions: lag shifts by `U`, and the zero-lag
/// covariances gain the noise injected during the cycle.
pub fn propagate_phi(
    phi_q: &mut [Vec<DMatrix<f64>>],
    phi_r: &mut [Vec<DMatrix<f64>>],
    u: &DMatrix<f64>,
    s_mat: &DMatrix<f64>,
    chain: &TransitionChain,
    param: &CovParameterization,
) {
    let ut = u.transpose();
    for family in [&mut *phi_q, &mut *phi_r] {
        for l in (1..family.len()).rev() {
            let (lo, hi) = family.split_at_mut(l);
            for (dst, src) in hi[0].iter_mut().zip(lo[l - 1].iter()) {
                dst.gemm(1.0, u, src, 0.0);
            }
        }
    }
    for (s, phi) in phi_q[0].iter_mut().enumerate() {
        *phi = u * &*phi * &ut + chain.noise_covariance(param, s);
    }
    for (basis, phi) in param.r_bases().iter().zip(phi_r[0].iter_mut()) {
        let mut next = u * &*phi * &ut;
        basis.add_congruence(s_mat, 1.0, &mut next);
        *phi = next;
    }
}
