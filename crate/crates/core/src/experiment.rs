//! Twin-experiment driver: truth, primary filter and an optional covariance
//! estimator advanced together one observation interval at a time.

use nalgebra::{DMatrix, DVector};

use crate::covest::{CovarianceEstimator, StepRecord, UpdateStatus};
use crate::error::{Error, Result};
use crate::etkf::{etkf_analysis, etkf_forecast, Ensemble, Regeneration};
use crate::kalman::{kf_analysis, kf_forecast, KalmanState};
use crate::letkf::{letkf_cycle, Letkf};
use crate::linalg::{clamp_eigenvalues, psd_sqrt};
use crate::metrics::rmse;
use crate::models::{Dynamics, L96Model, LinearModel, ObservationScheme, TriadModel, TruthStream};
use crate::rng::{standard_normal_vec, stream, stream_rng};

/// Smallest eigenvalue allowed in the `R` handed to the primary filter, scaled by
/// `max(1, trace/m)`. Floors near 1e-10 let a coefficient that dips below zero
/// stall the online estimators on the triad model.
pub const R_EIG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum Model {
    Linear(LinearModel),
    Triad(TriadModel),
    L96(L96Model),
}

impl Model {
    pub fn dynamics(&self) -> &dyn Dynamics {
        match self {
            Model::Linear(m) => m,
            Model::Triad(m) => m,
            Model::L96(m) => m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimaryFilter {
    Kalman,
    Etkf {
        ensemble_size: usize,
        regeneration: Regeneration,
    },
}

/// Everything except the estimator needed to run one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub model: Model,
    pub scheme: ObservationScheme,
    pub filter: PrimaryFilter,
    /// `Q` and `R` used by the filter before (or without) estimation.
    pub q0: DMatrix<f64>,
    pub r0: DMatrix<f64>,
    /// Covariance of the initial prior around the initial truth.
    pub prior_cov: DMatrix<f64>,
    /// Observation intervals to assimilate.
    pub cycles: usize,
    /// Integration steps run on the truth before the first observation.
    pub spinup: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleStatus {
    /// No estimator; `Q` and `R` are fixed.
    Fixed,
    Update(UpdateStatus),
    /// The regression was underdetermined; the previous estimates were kept.
    Underdetermined,
}

impl CycleStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CycleStatus::Fixed => "fixed",
            CycleStatus::Update(u) => u.label(),
            CycleStatus::Underdetermined => "underdetermined",
        }
    }
}

/// State of the experiment right after one analysis.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    /// 1-based analysis index.
    pub cycle: usize,
    pub truth: DVector<f64>,
    pub analysis: DVector<f64>,
    pub alpha: Option<DVector<f64>>,
    pub beta: Option<DVector<f64>>,
    /// Current estimates (the fixed values when nothing is estimated).
    pub q_est: DMatrix<f64>,
    pub r_est: DMatrix<f64>,
    pub status: CycleStatus,
}

impl CycleRecord {
    pub fn analysis_rmse(&self) -> f64 {
        rmse(&self.analysis, &self.truth)
    }
}

enum FilterState {
    Kalman(KalmanState),
    Ensemble(Ensemble),
}

fn validate(setup: &ExperimentSetup, est: Option<&dyn CovarianceEstimator>) -> Result<()> {
    let dynamics = setup.model.dynamics();
    let n = dynamics.state_dim();
    let l = dynamics.noise_dim();
    let m = setup.scheme.obs_dim();
    if setup.scheme.h.ncols() != n {
        return Err(Error::invalid(format!(
            "H has {} columns, the state has {n}",
            setup.scheme.h.ncols()
        )));
    }
    if setup.q0.shape() != (l, l) || setup.r0.shape() != (m, m) || setup.prior_cov.shape() != (n, n) {
        return Err(Error::invalid("initial Q, R or prior covariance has the wrong shape"));
    }
    if setup.cycles == 0 {
        return Err(Error::invalid("an experiment needs at least one cycle"));
    }
    match setup.filter {
        PrimaryFilter::Kalman if !matches!(setup.model, Model::Linear(_)) => {
            return Err(Error::invalid("the Kalman filter needs a linear model"));
        }
        PrimaryFilter::Etkf { ensemble_size, .. } if ensemble_size < 2 => {
            return Err(Error::invalid("an ensemble needs at least two members"));
        }
        _ => {}
    }
    if let Some(e) = est {
        let p = e.parameterization();
        if p.q_dim() != l || p.r_dim() != m {
            return Err(Error::invalid(format!(
                "estimator bases are {}x{} / {}x{}, model needs Q {l}x{l} and R {m}x{m}",
                p.q_dim(),
                p.q_dim(),
                p.r_dim(),
                p.r_dim()
            )));
        }
    }
    Ok(())
}

/// Covariances handed to the filter: the estimator's once it is active,
/// projected to PSD (`Q`) and PD (`R`).
fn used_covariances(setup: &ExperimentSetup, est: Option<&dyn CovarianceEstimator>) -> (DMatrix<f64>, DMatrix<f64>) {
    match est {
        Some(e) if e.active() => {
            let p = e.parameterization();
            let r = p.r();
            let floor = R_EIG_FLOOR * (r.trace().abs() / r.nrows() as f64).max(1.0);
            (clamp_eigenvalues(&p.q(), 0.0), clamp_eigenvalues(&r, floor))
        }
        _ => (setup.q0.clone(), setup.r0.clone()),
    }
}

/// Runs the experiment, handing every cycle to `on_cycle`.
pub fn run_experiment<F>(
    setup: &ExperimentSetup,
    mut estimator: Option<Box<dyn CovarianceEstimator>>,
    mut on_cycle: F,
) -> Result<Option<Box<dyn CovarianceEstimator>>>
where
    F: FnMut(&CycleRecord) -> Result<()>,
{
    validate(setup, estimator.as_deref())?;
    let dynamics = setup.model.dynamics();
    let n = dynamics.state_dim();
    let h = setup.scheme.h.clone();
    let every = setup.scheme.every;

    let mut truth = TruthStream::new(dynamics, &setup.scheme, dynamics.initial_state(), setup.seed);
    for _ in 0..setup.spinup {
        truth.advance();
    }
    let mut init_rng = stream_rng(setup.seed, stream::ENSEMBLE_INIT);
    let mut fc_rng = stream_rng(setup.seed, stream::ENSEMBLE_FORECAST);
    let prior_root = psd_sqrt(&setup.prior_cov, 1e-12)?;

    // the first prior is reached after one cycle of dynamics
    let (mut x_true, mut y) = truth.next_cycle();
    let prior_mean = &x_true + &prior_root * standard_normal_vec(&mut init_rng, n);
    let mut state = match setup.filter {
        PrimaryFilter::Kalman => FilterState::Kalman(KalmanState::from_prior(prior_mean, setup.prior_cov.clone())),
        PrimaryFilter::Etkf { ensemble_size, .. } => FilterState::Ensemble(Ensemble::sample(
            &mut init_rng,
            &prior_mean,
            &setup.prior_cov,
            ensemble_size,
        )?),
    };
    let mut transitions: Vec<DMatrix<f64>> = Vec::new();

    for cycle in 1..=setup.cycles {
        let (_, r_used) = used_covariances(setup, estimator.as_deref());
        let (rec, analysis) = match &state {
            FilterState::Kalman(kf) => {
                let post = kf_analysis(kf, &y, &h, &r_used)?;
                let innov_cov = crate::linalg::congruence(&h, &post.b_f) + &r_used;
                let rec = StepRecord {
                    v: post.v.clone(),
                    h: h.clone(),
                    k: post.k.clone(),
                    b_f: post.b_f.clone(),
                    b_a: post.b_a.clone(),
                    innov_cov,
                    transitions: std::mem::take(&mut transitions),
                };
                let mean = post.x_a.clone();
                state = FilterState::Kalman(post);
                (rec, mean)
            }
            FilterState::Ensemble(ens) => {
                let (post, er) = etkf_analysis(ens, &y, |x| &h * x, &r_used)?;
                let rec = StepRecord {
                    v: er.v,
                    h: er.h_hat,
                    k: er.k,
                    b_f: er.b_f,
                    b_a: er.b_a,
                    innov_cov: er.innov_cov,
                    transitions: std::mem::take(&mut transitions),
                };
                let mean = post.mean();
                state = FilterState::Ensemble(post);
                (rec, mean)
            }
        };

        let status = match estimator.as_mut() {
            None => CycleStatus::Fixed,
            Some(e) => match e.update(&rec) {
                Ok(s) => CycleStatus::Update(s),
                Err(Error::Underdetermined { .. }) => CycleStatus::Underdetermined,
                Err(err) => return Err(err),
            },
        };
        let (q_est, r_est, alpha, beta) = match estimator.as_deref() {
            Some(e) => {
                let p = e.parameterization();
                (p.q(), p.r(), Some(p.alpha.clone()), Some(p.beta.clone()))
            }
            None => (setup.q0.clone(), setup.r0.clone(), None, None),
        };
        on_cycle(&CycleRecord {
            cycle,
            truth: x_true.clone(),
            analysis,
            alpha,
            beta,
            q_est,
            r_est,
            status,
        })?;
        if cycle == setup.cycles {
            break;
        }

        let (q_used, _) = used_covariances(setup, estimator.as_deref());
        state = match state {
            FilterState::Kalman(kf) => {
                let Model::Linear(lin) = &setup.model else {
                    unreachable!("checked in validate")
                };
                transitions = vec![lin.f.clone(); every];
                FilterState::Kalman(kf_forecast(&kf, lin, &q_used, every)?)
            }
            FilterState::Ensemble(ens) => {
                let PrimaryFilter::Etkf { regeneration, .. } = setup.filter else {
                    unreachable!()
                };
                let fc = etkf_forecast(&ens, dynamics, &q_used, every, &mut fc_rng, regeneration)?;
                transitions = fc.f_hats;
                FilterState::Ensemble(fc.ensemble)
            }
        };
        (x_true, y) = truth.next_cycle();
    }
    Ok(estimator)
}

/// LETKF twin experiment on a fully observed ring.
#[derive(Debug, Clone)]
pub struct LetkfSetup {
    pub model: L96Model,
    /// Noise-free truth model; may equal `model`.
    pub truth_model: L96Model,
    pub r_true: f64,
    pub ensemble_size: usize,
    pub prior_var: f64,
    pub cycles: usize,
    pub spinup: usize,
    /// Integration steps per observation.
    pub every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LetkfCycleRecord {
    pub cycle: usize,
    pub analysis_rmse: f64,
    pub q1: f64,
    pub q2: f64,
    pub r: f64,
    pub regions_skipped: usize,
}

pub fn run_letkf<F>(setup: &LetkfSetup, filter: &mut Letkf, mut on_cycle: F) -> Result<()>
where
    F: FnMut(&LetkfCycleRecord) -> Result<()>,
{
    let n = setup.model.n;
    if setup.truth_model.n != n || filter.config().localization.n_global != n {
        return Err(Error::invalid("LETKF ring size does not match the model"));
    }
    let scheme = ObservationScheme::new(
        DMatrix::identity(n, n),
        DMatrix::identity(n, n) * setup.r_true,
        setup.every,
    )?;
    let mut truth = TruthStream::new(
        &setup.truth_model,
        &scheme,
        setup.truth_model.initial_state(),
        setup.seed,
    );
    for _ in 0..setup.spinup {
        truth.advance();
    }
    let mut init_rng = stream_rng(setup.seed, stream::ENSEMBLE_INIT);
    let mut fc_rng = stream_rng(setup.seed, stream::ENSEMBLE_FORECAST);
    let (mut x_true, mut y) = truth.next_cycle();
    let prior_cov = DMatrix::identity(n, n) * setup.prior_var;
    let mean = &x_true + standard_normal_vec(&mut init_rng, n) * setup.prior_var.sqrt();
    let mut ens = Ensemble::sample(&mut init_rng, &mean, &prior_cov, setup.ensemble_size)?;
    for cycle in 1..=setup.cycles {
        let out = letkf_cycle(filter, &ens, &y, &setup.model, setup.every, &mut fc_rng)?;
        on_cycle(&LetkfCycleRecord {
            cycle,
            analysis_rmse: rmse(&out.posterior.mean(), &x_true),
            q1: out.q.q1,
            q2: out.q.q2,
            r: out.r.r,
            regions_skipped: out.diagnostics.regions_skipped,
        })?;
        ens = out.forecast;
        (x_true, y) = truth.next_cycle();
    }
    Ok(())
}
