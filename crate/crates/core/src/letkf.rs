//! Localized ETKF on a ring with one covariance estimator per local region.
//!
//! Every site is the centre of one region. Regions run independent analyses
//! and independent `(q1, q2, r)` estimators; the filter itself uses the
//! spatial average of the regional estimates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::covest::param::{identity_basis, tridiagonal_bases};
use crate::covest::{CovParameterization, CovarianceEstimator, MblEstimator, OblEstimator, StepRecord, Weighting};
use crate::error::{Error, Result};
use crate::etkf::{etkf_analysis, etkf_forecast, linearize, Ensemble, Regeneration};
use crate::linalg::clamp_eigenvalues;
use crate::models::Dynamics;

/// Smallest `r` handed to the local analyses.
pub const R_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalizationConfig {
    pub radius: usize,
    pub n_global: usize,
}

/// Sites of one region and the position of its centre among them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub sites: Vec<usize>,
    pub centre: usize,
}

impl Region {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

impl LocalizationConfig {
    pub fn new(radius: usize, n_global: usize) -> Result<Self> {
        if n_global == 0 {
            return Err(Error::invalid("localization needs at least one site"));
        }
        Ok(Self { radius, n_global })
    }

    /// A single region spans the whole ring.
    pub fn is_global(&self) -> bool {
        2 * self.radius + 1 >= self.n_global
    }

    /// The cyclic window of `2·radius + 1` sites around `site`, or the whole
    /// ring in natural order when the window would wrap onto itself.
    pub fn region_of(&self, site: usize) -> Region {
        let n = self.n_global;
        if self.is_global() {
            return Region {
                sites: (0..n).collect(),
                centre: site,
            };
        }
        let sites = (0..2 * self.radius + 1)
            .map(|k| (site + n - self.radius + k) % n)
            .collect();
        Region {
            sites,
            centre: self.radius,
        }
    }
}

pub fn local_regions(cfg: &LocalizationConfig) -> Vec<Region> {
    (0..cfg.n_global).map(|i| cfg.region_of(i)).collect()
}

fn restrict_rows(m: &DMatrix<f64>, sites: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(sites.len(), m.ncols(), |i, j| m[(sites[i], j)])
}

fn restrict_vec(v: &DVector<f64>, sites: &[usize]) -> DVector<f64> {
    DVector::from_fn(sites.len(), |i, _| v[sites[i]])
}

/// `Q` with `q1` on the diagonal and `q2` on the cyclic first off-diagonals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirculantQParam {
    pub q1: f64,
    pub q2: f64,
}

impl CirculantQParam {
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        let mut q = DMatrix::identity(n, n) * self.q1;
        if n > 1 {
            for i in 0..n {
                let j = (i + 1) % n;
                if j != i {
                    q[(i, j)] = self.q2;
                    q[(j, i)] = self.q2;
                }
            }
        }
        q
    }

    /// Frobenius projection of a local matrix onto `{I, first off-diagonals}`,
    /// with the off-diagonals wrapping when `cyclic`.
    pub fn project(local: &DMatrix<f64>, cyclic: bool) -> Result<Self> {
        let d = local.nrows();
        if local.ncols() != d || d < 2 {
            return Err(Error::invalid("projection needs a square matrix of size >= 2"));
        }
        let stencil = tridiagonal_bases(d, cyclic).pop().expect("two bases");
        let q1 = local.trace() / d as f64;
        let q2 = crate::linalg::frob_inner(&stencil, local) / stencil.norm_squared();
        Ok(Self { q1, q2 })
    }
}

/// `R = r·I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRParam {
    pub r: f64,
}

impl ScalarRParam {
    pub fn matrix(&self, m: usize) -> DMatrix<f64> {
        DMatrix::identity(m, m) * self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalEstimator {
    Mbl { lags: usize, tau: f64 },
    Obl { lags: usize, prior_var: f64 },
}

#[derive(Debug, Clone)]
pub struct LetkfConfig {
    pub localization: LocalizationConfig,
    /// `None` keeps `Q` and `R` at their initial values.
    pub estimator: Option<LocalEstimator>,
    pub q_init: CirculantQParam,
    pub r_init: ScalarRParam,
}

struct RegionState {
    region: Region,
    estimator: Option<Box<dyn CovarianceEstimator>>,
    /// Local linearized forecast of the cycle ending at the next analysis.
    f_hat: Option<DMatrix<f64>>,
}

/// Per-cycle outcome of the regional work.
#[derive(Debug, Clone, Default)]
pub struct LetkfDiagnostics {
    pub regions_skipped: usize,
    /// `(centre site, reason)` for each skipped region.
    pub skipped: Vec<(usize, String)>,
}

pub struct Letkf {
    cfg: LetkfConfig,
    regions: Vec<RegionState>,
    pub q: CirculantQParam,
    pub r: ScalarRParam,
}

fn local_parameterization(d: usize, cyclic: bool, q: CirculantQParam, r: ScalarRParam) -> Result<CovParameterization> {
    CovParameterization::new(
        tridiagonal_bases(d, cyclic),
        identity_basis(d),
        DVector::from_column_slice(&[q.q1, q.q2]),
        DVector::from_element(1, r.r),
    )
}

impl Letkf {
    pub fn new(cfg: LetkfConfig) -> Result<Self> {
        let loc = cfg.localization;
        if cfg.estimator.is_some() && loc.radius == 0 {
            return Err(Error::invalid(
                "estimating q2 needs a localization radius of at least 1",
            ));
        }
        let cyclic = loc.is_global();
        let regions = local_regions(&loc)
            .into_iter()
            .map(|region| {
                let d = region.len();
                let estimator: Option<Box<dyn CovarianceEstimator>> = match cfg.estimator {
                    None => None,
                    Some(kind) => {
                        let param = local_parameterization(d, cyclic, cfg.q_init, cfg.r_init)?;
                        let gamma = DMatrix::identity(d, d);
                        Some(match kind {
                            LocalEstimator::Mbl { lags, tau } => Box::new(MblEstimator::new(param, gamma, lags, tau)?),
                            LocalEstimator::Obl { lags, prior_var } => {
                                Box::new(OblEstimator::new(param, gamma, lags, prior_var, Weighting::Kronecker)?)
                            }
                        })
                    }
                };
                Ok(RegionState {
                    region,
                    estimator,
                    f_hat: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            q: cfg.q_init,
            r: cfg.r_init,
            cfg,
            regions,
        })
    }

    pub fn config(&self) -> &LetkfConfig {
        &self.cfg
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().map(|r| &r.region)
    }

    /// The global circulant `Q`, clamped to be positive semidefinite.
    pub fn global_q(&self) -> DMatrix<f64> {
        clamp_eigenvalues(&self.q.matrix(self.cfg.localization.n_global), 0.0)
    }

    fn r_used(&self) -> f64 {
        self.r.r.max(R_FLOOR)
    }

    /// Regional analyses of a fully observed ring, followed by the regional
    /// estimator updates and the spatial average of their estimates.
    pub fn analysis(&mut self, ens_f: &Ensemble, y: &DVector<f64>) -> Result<(Ensemble, LetkfDiagnostics)> {
        let n = self.cfg.localization.n_global;
        if ens_f.dim() != n || y.len() != n {
            return Err(Error::invalid("LETKF expects every site of the ring to be observed"));
        }
        let r = self.r_used();
        let members = &ens_f.members;
        let outcomes: Vec<RegionOutcome> = self
            .regions
            .par_iter_mut()
            .map(|state| state.assimilate(members, y, r))
            .collect();

        let mut posterior = members.clone();
        let mut diag = LetkfDiagnostics::default();
        let mut sums = [0.0; 3];
        let mut count = 0usize;
        for (state, out) in self.regions.iter().zip(outcomes) {
            let site = state.region.sites[state.region.centre];
            if let Some(row) = out.row {
                posterior.set_row(site, &row.transpose());
            }
            match (out.error, out.estimate) {
                (Some(msg), _) => {
                    diag.regions_skipped += 1;
                    diag.skipped.push((site, msg));
                }
                (None, Some(est)) => {
                    for (acc, v) in sums.iter_mut().zip(est) {
                        *acc += v;
                    }
                    count += 1;
                }
                (None, None) => {}
            }
        }
        if count > 0 {
            let k = count as f64;
            self.q = CirculantQParam {
                q1: sums[0] / k,
                q2: sums[1] / k,
            };
            self.r = ScalarRParam { r: sums[2] / k };
        }
        Ok((Ensemble::new(posterior)?, diag))
    }

    /// Deterministic propagation plus fresh `N(0, ΓQΓᵀ)` draws for every
    /// member. Records each region's linearized forecast for the next analysis.
    pub fn forecast<R: Rng + ?Sized>(
        &mut self,
        ens_a: &Ensemble,
        model: &dyn Dynamics,
        n_steps: usize,
        rng: &mut R,
    ) -> Result<Ensemble> {
        let q = self.global_q();
        let fc = etkf_forecast(ens_a, model, &q, n_steps, rng, Regeneration::AdditiveNoise)?;
        if self.cfg.estimator.is_some() {
            let u_a = ens_a.perturbations();
            let u_det = &fc.deterministic;
            self.regions.par_iter_mut().for_each(|state| {
                let sites = &state.region.sites;
                state.f_hat = linearize(&restrict_rows(&u_a, sites), &restrict_rows(u_det, sites))
                    .ok()
                    .map(|l| l.matrix);
            });
        }
        Ok(fc.ensemble)
    }
}

struct RegionOutcome {
    row: Option<DVector<f64>>,
    /// `(q1, q2, r)` after this cycle's local update.
    estimate: Option<[f64; 3]>,
    error: Option<String>,
}

impl RegionState {
    fn assimilate(&mut self, members: &DMatrix<f64>, y: &DVector<f64>, r: f64) -> RegionOutcome {
        let sites = &self.region.sites;
        let d = sites.len();
        let failed = |msg: String, row| RegionOutcome {
            row,
            estimate: None,
            error: Some(msg),
        };
        let local = match Ensemble::new(restrict_rows(members, sites)) {
            Ok(e) => e,
            Err(e) => return failed(e.to_string(), None),
        };
        let (post, rec) = match etkf_analysis(
            &local,
            &restrict_vec(y, sites),
            |x| x.clone(),
            &(DMatrix::identity(d, d) * r),
        ) {
            Ok(out) => out,
            Err(e) => return failed(format!("analysis: {e}"), None),
        };
        let row = Some(post.members.row(self.region.centre).transpose());
        let Some(est) = self.estimator.as_mut() else {
            return RegionOutcome {
                row,
                estimate: None,
                error: None,
            };
        };
        let transitions = self.f_hat.take().map(|f| vec![f]).unwrap_or_default();
        let step = StepRecord {
            v: rec.v,
            h: DMatrix::identity(d, d),
            k: rec.k,
            b_f: rec.b_f,
            b_a: rec.b_a,
            innov_cov: rec.innov_cov,
            transitions,
        };
        if let Err(e) = est.update(&step) {
            return failed(format!("estimator: {e}"), row);
        }
        let p = est.parameterization();
        let estimate = [p.alpha[0], p.alpha[1], p.beta[0]];
        if estimate.iter().any(|v| !v.is_finite()) {
            return failed("estimator produced non-finite coefficients".into(), row);
        }
        RegionOutcome {
            row,
            estimate: Some(estimate),
            error: None,
        }
    }
}

/// Result of one full LETKF cycle.
#[derive(Debug, Clone)]
pub struct LetkfCycle {
    pub posterior: Ensemble,
    /// Forecast ensemble for the next analysis time.
    pub forecast: Ensemble,
    pub q: CirculantQParam,
    pub r: ScalarRParam,
    pub diagnostics: LetkfDiagnostics,
}

/// Analysis, estimation and forecast over one observation interval.
pub fn letkf_cycle<R: Rng + ?Sized>(
    filter: &mut Letkf,
    ens_f: &Ensemble,
    y: &DVector<f64>,
    model: &dyn Dynamics,
    n_steps: usize,
    rng: &mut R,
) -> Result<LetkfCycle> {
    let (posterior, diagnostics) = filter.analysis(ens_f, y)?;
    let forecast = filter.forecast(&posterior, model, n_steps, rng)?;
    Ok(LetkfCycle {
        posterior,
        forecast,
        q: filter.q,
        r: filter.r,
        diagnostics,
    })
}
