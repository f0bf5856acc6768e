//! Ensemble transform Kalman filter for stochastic nonlinear models, with
//! ensemble estimates of the linearized forward and observation operators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, center_columns, inverse_spd, pinv, psd_sqrt, sym_eigen, symmetrize_mut, PINV_RTOL};
use crate::models::Dynamics;
use crate::rng::standard_normal_mat;

/// Roundoff allowance when taking the square root of a forecast covariance.
pub const SQRT_CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// `n × N_e`, one member per column.
    pub members: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::invalid("an ensemble needs at least two members"));
        }
        Ok(Self { members })
    }

    /// `N_e` draws from `N(mean, cov)`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean: &DVector<f64>, cov: &DMatrix<f64>, size: usize) -> Result<Self> {
        let root = psd_sqrt(cov, SQRT_CLAMP_TOL)?;
        let z = standard_normal_mat(rng, mean.len(), size);
        let mut x = root * z;
        for mut col in x.column_iter_mut() {
            col += mean;
        }
        Self::new(x)
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }

    pub fn perturbations(&self) -> DMatrix<f64> {
        center_columns(&self.members).1
    }

    /// `U Uᵀ / (N_e − 1)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        sample_covariance(&self.perturbations())
    }

    fn from_parts(mean: &DVector<f64>, perturbations: DMatrix<f64>) -> Self {
        let mut members = perturbations;
        for mut col in members.column_iter_mut() {
            col += mean;
        }
        Self { members }
    }
}

fn sample_covariance(u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut b = u * u.transpose() / (u.ncols() as f64 - 1.0);
    symmetrize_mut(&mut b);
    b
}

/// Least-squares linear map taking one set of centered perturbations to another.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub matrix: DMatrix<f64>,
    /// Effective rank of the input perturbations.
    pub rank: usize,
}

/// `U_out · pinv(U_in)`.
pub fn linearize(u_in: &DMatrix<f64>, u_out: &DMatrix<f64>) -> Result<Linearization> {
    if u_in.ncols() != u_out.ncols() {
        return Err(Error::invalid(
            "linearize: perturbation matrices need the same ensemble size",
        ));
    }
    let p = pinv(u_in);
    Ok(Linearization {
        matrix: u_out * p.matrix,
        rank: p.rank,
    })
}

#[derive(Debug, Clone)]
pub struct EtkfStepRecord {
    pub h_hat: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub b_f: DMatrix<f64>,
    pub b_a: DMatrix<f64>,
    pub v: DVector<f64>,
    /// `V Vᵀ/(N_e−1) + R`.
    pub innov_cov: DMatrix<f64>,
    /// Rank of the prior perturbations used for `h_hat`.
    pub rank: usize,
}

/// One ETKF analysis with observation map `h` and observation covariance `r_used`.
pub fn etkf_analysis<H>(
    ens_f: &Ensemble,
    y: &DVector<f64>,
    h: H,
    r_used: &DMatrix<f64>,
) -> Result<(Ensemble, EtkfStepRecord)>
where
    H: Fn(&DVector<f64>) -> DVector<f64>,
{
    if !all_finite(&ens_f.members) {
        return Err(Error::numerical("ETKF analysis: non-finite ensemble", f64::INFINITY));
    }
    let ne = ens_f.size();
    let m = y.len();
    if r_used.shape() != (m, m) {
        return Err(Error::invalid("R_used does not match the observation dimension"));
    }
    let r_inv = inverse_spd(r_used, "R_used").map_err(|_| Error::invalid("R_used is not positive definite"))?;

    let (x_mean, u) = center_columns(&ens_f.members);
    let mut yf = DMatrix::zeros(m, ne);
    for (i, col) in ens_f.members.column_iter().enumerate() {
        let hx = h(&col.into_owned());
        if hx.len() != m {
            return Err(Error::invalid("observation map returned the wrong dimension"));
        }
        yf.set_column(i, &hx);
    }
    let (y_mean, vp) = center_columns(&yf);
    let h_hat = linearize(&u, &vp)?;

    let scale = ne as f64 - 1.0;
    let vt_rinv = vp.transpose() * &r_inv;
    let mut j = DMatrix::identity(ne, ne) * scale + &vt_rinv * &vp;
    symmetrize_mut(&mut j);
    let eig = sym_eigen(&j);
    let e = &eig.eigenvectors;
    let d = &eig.eigenvalues;
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::numerical("ETKF transform", f64::INFINITY));
    }
    let inv_d = d.map(|x| 1.0 / x);
    let j_inv = e * DMatrix::from_diagonal(&inv_d) * e.transpose();
    let t = e * DMatrix::from_diagonal(&d.map(|x| (scale / x).sqrt())) * e.transpose();

    let innovation = y - &y_mean;
    let w = &j_inv * (&vt_rinv * &innovation);
    let x_a = &x_mean + &u * w;

    let mut p_y = &vp * vp.transpose() / scale + r_used;
    symmetrize_mut(&mut p_y);
    let p_xy = &u * vp.transpose() / scale;
    let k = p_xy * inverse_spd(&p_y, "ETKF innovation covariance")?;

    let u_a = &u * t;
    let b_f = sample_covariance(&u);
    let b_a = sample_covariance(&u_a);
    let ens_a = Ensemble::from_parts(&x_a, u_a);
    if !all_finite(&ens_a.members) {
        return Err(Error::numerical(
            "ETKF analysis produced non-finite members",
            f64::INFINITY,
        ));
    }
    Ok((
        ens_a,
        EtkfStepRecord {
            h_hat: h_hat.matrix,
            k,
            b_f,
            b_a,
            v: innovation,
            innov_cov: p_y,
            rank: h_hat.rank,
        },
    ))
}

/// How the forecast ensemble is made to carry the model-noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regeneration {
    /// Fresh perturbations whose sample covariance equals the target exactly.
    #[default]
    Exact,
    /// The same construction with `D₃⁻¹` in place of `D₃^{-1/2}`; kept for comparison.
    PrintedExponent,
    /// Independent `N(0, ΓQΓᵀ)` draws added to each deterministic perturbation.
    AdditiveNoise,
}

#[derive(Debug, Clone)]
pub struct EtkfForecast {
    pub ensemble: Ensemble,
    /// Linearized forward operator of every sub-step, in time order.
    pub f_hats: Vec<DMatrix<f64>>,
    /// Target prior covariance of the final sub-step.
    pub b_f: DMatrix<f64>,
    /// Perturbations of the final sub-step before any noise is applied.
    pub deterministic: DMatrix<f64>,
}

/// Propagates the posterior ensemble `n_steps` integration steps.
pub fn etkf_forecast<R: Rng + ?Sized>(
    ens_a: &Ensemble,
    model: &dyn Dynamics,
    q_used: &DMatrix<f64>,
    n_steps: usize,
    rng: &mut R,
    mode: Regeneration,
) -> Result<EtkfForecast> {
    if n_steps == 0 {
        return Err(Error::invalid("etkf_forecast needs N >= 1"));
    }
    let gamma = model.noise_coupling();
    let mut noise = gamma * q_used * gamma.transpose();
    symmetrize_mut(&mut noise);
    let noiseless = noise.iter().all(|&x| x == 0.0);
    let ne = ens_a.size();
    let mut x = ens_a.members.clone();
    let mut f_hats = Vec::with_capacity(n_steps);
    let mut b = DMatrix::zeros(0, 0);
    let mut deterministic = DMatrix::zeros(0, 0);
    for _ in 0..n_steps {
        let (_, u_f) = center_columns(&x);
        for i in 0..ne {
            let next = model.propagate(&x.column(i).into_owned());
            x.set_column(i, &next);
        }
        if !all_finite(&x) {
            return Err(Error::numerical("ensemble forecast diverged", f64::INFINITY));
        }
        let (mean, u_df) = center_columns(&x);
        f_hats.push(linearize(&u_f, &u_df)?.matrix);
        b = sample_covariance(&u_df) + &noise;
        deterministic.clone_from(&u_df);
        if noiseless {
            continue;
        }
        let u_new = match mode {
            Regeneration::Exact => regenerate(&b, ne, rng, -0.5)?,
            Regeneration::PrintedExponent => regenerate(&b, ne, rng, -1.0)?,
            Regeneration::AdditiveNoise => {
                let l = psd_sqrt(q_used, SQRT_CLAMP_TOL)
                    .map_err(|e| Error::numerical(format!("noise factor: {e}"), f64::INFINITY))?;
                let z = standard_normal_mat(rng, q_used.nrows(), ne);
                u_df + gamma * (l * z)
            }
        };
        x = Ensemble::from_parts(&mean, u_new).members;
    }
    Ok(EtkfForecast {
        ensemble: Ensemble { members: x },
        f_hats,
        b_f: b,
        deterministic,
    })
}

/// `√B · E D^p Eᵀ · δ` for centered standard normal `δ`, where
/// `δδᵀ/(N_e−1) = E D Eᵀ`. With `p = −1/2` the result has sample covariance
/// `B` projected onto the span of `δ`.
fn regenerate<R: Rng + ?Sized>(b: &DMatrix<f64>, ne: usize, rng: &mut R, power: f64) -> Result<DMatrix<f64>> {
    let n = b.nrows();
    let root = psd_sqrt(b, SQRT_CLAMP_TOL)
        .map_err(|e| Error::numerical(format!("forecast covariance square root: {e}"), f64::INFINITY))?;
    let (_, delta) = center_columns(&standard_normal_mat(rng, n, ne));
    let c = &delta * delta.transpose() / (ne as f64 - 1.0);
    let eig = sym_eigen(&c);
    let dmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let scaled = eig
        .eigenvalues
        .map(|d| if d > PINV_RTOL * dmax { d.powf(power) } else { 0.0 });
    let e = &eig.eigenvectors;
    let whiten = e * DMatrix::from_diagonal(&scaled) * e.transpose();
    Ok(root * (whiten * delta))
}
