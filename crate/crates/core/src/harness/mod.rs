//! Experiment configuration, presets and the file-producing drivers behind
//! the command-line tool.

pub mod bench;
pub mod config;
pub mod presets;
pub mod run;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::covest::param::{block_bases, diagonal_bases, identity_basis, symmetric_bases, tridiagonal_bases};
use crate::covest::{BsEstimator, CovParameterization, CovarianceEstimator, MblEstimator, OblEstimator, Weighting};
use crate::error::{Error, Result};
use crate::etkf::Regeneration;
use crate::experiment::{ExperimentSetup, LetkfSetup, Model, PrimaryFilter};
use crate::letkf::{CirculantQParam, Letkf, LetkfConfig, LocalEstimator, LocalizationConfig, ScalarRParam};
use crate::models::{random_covariance, L96Model, LinearModel, ObservationScheme, TriadModel};
use crate::rng::{stream, stream_rng};

pub use bench::{bench_complexity, BenchConfig, BenchRow, BenchTable};
pub use config::RawConfig;
pub use presets::{apply_scale, preset, PRESET_NAMES};
pub use run::{expand_grid, run, simulate, sweep, RunSummary, SweepCell};

/// Declares a keyword enum with string conversions in both directions.
macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [&'static str] = &[$($text),+];
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($name::$variant => $text),+
                })
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("expected one of {}", $name::ALL.join(", "))),
                }
            }
        }
    };
}

keyword_enum!(ModelKind {
    Linear => "linear",
    Triad => "triad",
    L96 => "l96",
    L96Deterministic => "l96-deterministic",
});

keyword_enum!(ObsKind {
    Full => "full",
    Partial => "partial",
});

keyword_enum!(FilterKind {
    Kf => "kf",
    Etkf => "etkf",
    Letkf => "letkf",
});

keyword_enum!(EstimatorKind {
    Mbl => "mbl",
    Bs => "bs",
    Obl => "obl",
    None => "none",
});

keyword_enum!(BasisKind {
    Diagonal => "diagonal",
    Symmetric => "symmetric",
    Block => "block",
    Tridiagonal => "tridiagonal",
    Identity => "identity",
});

keyword_enum!(RegenerationKind {
    Exact => "exact",
    PrintedExponent => "printed-exponent",
    AdditiveNoise => "additive-noise",
});

keyword_enum!(WeightingKind {
    Kronecker => "kronecker",
    Identity => "identity",
});

/// Initial guess for `Q` or `R`: a multiple of the identity, or the
/// model-specific default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guess {
    Auto,
    Scaled(f64),
}

impl fmt::Display for Guess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guess::Auto => f.write_str("auto"),
            Guess::Scaled(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Guess {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Guess::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Guess::Scaled(v)),
            _ => Err("expected `auto` or a finite number".into()),
        }
    }
}

/// A fully resolved experiment description. Every field has a value;
/// defaults depend on the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub obs: ObsKind,
    /// Ring size (Lorenz-96 only).
    pub n: usize,
    pub forcing: f64,
    pub dt: f64,
    pub obs_stride: usize,
    /// Integration steps per observation.
    pub every: usize,
    /// `tr(R)/tr(Q)` for the random Lorenz-96 covariances.
    pub ratio: f64,
    /// Observation-error variance for models with `R = r I`.
    pub r: f64,

    pub filter: FilterKind,
    pub ensemble: usize,
    pub regeneration: RegenerationKind,
    pub radius: usize,
    pub prior_var: f64,

    pub estimator: EstimatorKind,
    pub lags: usize,
    pub tau: f64,
    pub est_prior_var: f64,
    pub weighting: WeightingKind,
    pub btilde_per_basis: bool,
    pub q_bases: BasisKind,
    pub r_bases: BasisKind,
    pub block: usize,
    pub q0: Guess,
    pub r0: Guess,

    /// Observation cycles to assimilate.
    pub steps: usize,
    /// Truth integration steps before the first observation.
    pub spinup: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for `model`; the remaining fields follow from it.
    pub fn defaults(model: ModelKind) -> Self {
        let mut c = ExperimentConfig {
            model,
            obs: ObsKind::Full,
            n: 40,
            forcing: 8.0,
            dt: 0.05,
            obs_stride: 2,
            every: 1,
            ratio: 1.0,
            r: 1.0,
            filter: FilterKind::Etkf,
            ensemble: 16,
            regeneration: RegenerationKind::Exact,
            radius: 5,
            prior_var: 1.0,
            estimator: EstimatorKind::Mbl,
            lags: 1,
            tau: 1000.0,
            est_prior_var: 1.0,
            weighting: WeightingKind::Kronecker,
            btilde_per_basis: false,
            q_bases: BasisKind::Diagonal,
            r_bases: BasisKind::Diagonal,
            block: 4,
            q0: Guess::Auto,
            r0: Guess::Auto,
            steps: 1000,
            spinup: 0,
            seed: 1,
        };
        match model {
            ModelKind::Linear => c.filter = FilterKind::Kf,
            ModelKind::Triad => {
                c.dt = 0.1;
                c.r = 0.0257;
                c.spinup = 1000;
            }
            ModelKind::L96 => {
                c.ensemble = 50;
                c.spinup = 1000;
                c.q_bases = BasisKind::Block;
                c.r_bases = BasisKind::Symmetric;
            }
            ModelKind::L96Deterministic => {
                c.filter = FilterKind::Letkf;
                c.ensemble = 20;
                c.spinup = 1000;
                c.q0 = Guess::Scaled(0.0);
                c.r0 = Guess::Scaled(0.5);
            }
        }
        c
    }

    /// Parses and validates. Keys that the resolved configuration does not
    /// use are rejected with their line number.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(e) = raw.entries().iter().find(|e| e.key.starts_with(config::SWEEP_PREFIX)) {
            return Err(raw.error(&e.key, "sweep keys are only accepted by the sweep command"));
        }
        let model: ModelKind = raw.field("model", ModelKind::Linear)?;
        let d = Self::defaults(model);
        let c = ExperimentConfig {
            model,
            obs: raw.field("model.obs", d.obs)?,
            n: raw.field("model.n", d.n)?,
            forcing: raw.field("model.forcing", d.forcing)?,
            dt: raw.field("model.dt", d.dt)?,
            obs_stride: raw.field("model.obs_stride", d.obs_stride)?,
            every: raw.field("model.every", d.every)?,
            ratio: raw.field("model.ratio", d.ratio)?,
            r: raw.field("model.r", d.r)?,
            filter: raw.field("filter", d.filter)?,
            ensemble: raw.field("filter.ensemble", d.ensemble)?,
            regeneration: raw.field("filter.regeneration", d.regeneration)?,
            radius: raw.field("filter.radius", d.radius)?,
            prior_var: raw.field("filter.prior_var", d.prior_var)?,
            estimator: raw.field("estimator", d.estimator)?,
            lags: raw.field("estimator.lags", d.lags)?,
            tau: raw.field("estimator.tau", d.tau)?,
            est_prior_var: raw.field("estimator.prior_var", d.est_prior_var)?,
            weighting: raw.field("estimator.weighting", d.weighting)?,
            btilde_per_basis: raw.field("estimator.btilde_per_basis", d.btilde_per_basis)?,
            q_bases: raw.field("estimator.q_bases", d.q_bases)?,
            r_bases: raw.field("estimator.r_bases", d.r_bases)?,
            block: raw.field("estimator.block", d.block)?,
            q0: raw.field("estimator.q0", d.q0)?,
            r0: raw.field("estimator.r0", d.r0)?,
            steps: raw.field("steps", d.steps)?,
            spinup: raw.field("spinup", d.spinup)?,
            seed: raw.field("seed", d.seed)?,
        };
        let used = c.to_raw();
        for e in raw.entries() {
            if used.get(&e.key).is_none() {
                let known = Self::all_keys().contains(&e.key.as_str());
                let msg = if known {
                    format!(
                        "not used with model = {}, filter = {}, estimator = {}",
                        c.model, c.filter, c.estimator
                    )
                } else {
                    "unknown key".to_string()
                };
                return Err(raw.error(&e.key, msg));
            }
        }
        c.validate(raw)?;
        Ok(c)
    }

    fn all_keys() -> Vec<&'static str> {
        vec![
            "model",
            "model.obs",
            "model.n",
            "model.forcing",
            "model.dt",
            "model.obs_stride",
            "model.every",
            "model.ratio",
            "model.r",
            "filter",
            "filter.ensemble",
            "filter.regeneration",
            "filter.radius",
            "filter.prior_var",
            "estimator",
            "estimator.lags",
            "estimator.tau",
            "estimator.prior_var",
            "estimator.weighting",
            "estimator.btilde_per_basis",
            "estimator.q_bases",
            "estimator.r_bases",
            "estimator.block",
            "estimator.q0",
            "estimator.r0",
            "steps",
            "spinup",
            "seed",
        ]
    }

    fn validate(&self, raw: &RawConfig) -> Result<()> {
        let fail = |key: &str, msg: &str| Err(raw.error(key, msg));
        match (self.model, self.filter) {
            (ModelKind::Linear, FilterKind::Letkf) | (ModelKind::Triad, FilterKind::Letkf) => {
                return fail("filter", "the localized filter needs a Lorenz-96 model");
            }
            (m, FilterKind::Kf) if m != ModelKind::Linear => {
                return fail("filter", "the Kalman filter needs model = linear")
            }
            _ => {}
        }
        if self.filter == FilterKind::Letkf && self.estimator == EstimatorKind::Bs {
            return fail("estimator", "the localized filter supports mbl, obl or none");
        }
        if matches!(self.model, ModelKind::L96 | ModelKind::L96Deterministic) && self.n < 4 {
            return fail("model.n", "the ring needs at least 4 sites");
        }
        if !(self.dt > 0.0) {
            return fail("model.dt", "must be positive");
        }
        if self.every == 0 {
            return fail("model.every", "must be at least 1");
        }
        if self.obs_stride == 0 {
            return fail("model.obs_stride", "must be at least 1");
        }
        if !(self.ratio > 0.0) {
            return fail("model.ratio", "must be positive");
        }
        if !(self.r > 0.0) {
            return fail("model.r", "must be positive");
        }
        if self.filter != FilterKind::Kf && self.ensemble < 2 {
            return fail("filter.ensemble", "an ensemble needs at least two members");
        }
        if !(self.prior_var > 0.0) {
            return fail("filter.prior_var", "must be positive");
        }
        if self.filter == FilterKind::Letkf && self.estimator != EstimatorKind::None && self.radius == 0 {
            return fail("filter.radius", "estimation needs a local radius of at least 1");
        }
        if self.estimator != EstimatorKind::None {
            if matches!(self.estimator, EstimatorKind::Mbl | EstimatorKind::Bs) && !(self.tau >= 1.0) {
                return fail("estimator.tau", "must be at least 1");
            }
            if self.estimator == EstimatorKind::Obl && !(self.est_prior_var > 0.0) {
                return fail("estimator.prior_var", "must be positive");
            }
            if self.estimator == EstimatorKind::Mbl && self.lags == 0 {
                return fail("estimator.lags", "must be at least 1");
            }
            if (self.q_bases == BasisKind::Block || self.r_bases == BasisKind::Block) && self.block == 0 {
                return fail("estimator.block", "must be at least 1");
            }
        }
        if self.steps == 0 {
            return fail("steps", "must be at least 1");
        }
        Ok(())
    }

    /// Every key this configuration uses, in a fixed order.
    pub fn to_raw(&self) -> RawConfig {
        let mut r = RawConfig::default();
        r.set("model", self.model);
        match self.model {
            ModelKind::Linear => r.set("model.obs", self.obs),
            ModelKind::Triad => {
                r.set("model.obs", self.obs);
                r.set("model.dt", self.dt);
                r.set("model.r", self.r);
            }
            ModelKind::L96 => {
                r.set("model.n", self.n);
                r.set("model.forcing", self.forcing);
                r.set("model.dt", self.dt);
                r.set("model.obs_stride", self.obs_stride);
                r.set("model.ratio", self.ratio);
            }
            ModelKind::L96Deterministic => {
                r.set("model.n", self.n);
                r.set("model.forcing", self.forcing);
                r.set("model.dt", self.dt);
                r.set("model.r", self.r);
            }
        }
        r.set("model.every", self.every);
        r.set("filter", self.filter);
        match self.filter {
            FilterKind::Kf => {}
            FilterKind::Etkf => {
                r.set("filter.ensemble", self.ensemble);
                r.set("filter.regeneration", self.regeneration);
            }
            FilterKind::Letkf => {
                r.set("filter.ensemble", self.ensemble);
                r.set("filter.radius", self.radius);
            }
        }
        r.set("filter.prior_var", self.prior_var);
        r.set("estimator", self.estimator);
        match self.estimator {
            EstimatorKind::None => {}
            EstimatorKind::Mbl => {
                r.set("estimator.lags", self.lags);
                r.set("estimator.tau", self.tau);
            }
            EstimatorKind::Bs => {
                r.set("estimator.tau", self.tau);
                r.set("estimator.btilde_per_basis", self.btilde_per_basis);
            }
            EstimatorKind::Obl => {
                r.set("estimator.lags", self.lags);
                r.set("estimator.prior_var", self.est_prior_var);
                if self.filter != FilterKind::Letkf {
                    r.set("estimator.weighting", self.weighting);
                }
            }
        }
        if self.filter != FilterKind::Letkf && self.estimator != EstimatorKind::None {
            r.set("estimator.q_bases", self.q_bases);
            r.set("estimator.r_bases", self.r_bases);
            if self.q_bases == BasisKind::Block || self.r_bases == BasisKind::Block {
                r.set("estimator.block", self.block);
            }
        }
        // the fixed Q and R of a run without estimation also come from here
        r.set("estimator.q0", self.q0);
        r.set("estimator.r0", self.r0);
        r.set("steps", self.steps);
        r.set("spinup", self.spinup);
        r.set("seed", self.seed);
        r
    }

    /// Builds models, filter and estimator ready to run.
    pub fn build(&self) -> Result<Plan> {
        if self.filter == FilterKind::Letkf {
            return self.build_letkf().map(Plan::Letkf);
        }
        let (model, scheme) = self.build_model()?;
        let dynamics = model.dynamics();
        let q_true = dynamics.q_true().clone();
        let r_true = scheme.r_true.clone();
        let (l, m, n) = (dynamics.noise_dim(), scheme.obs_dim(), dynamics.state_dim());
        let q0 = match self.q0 {
            Guess::Scaled(v) => DMatrix::identity(l, l) * v,
            Guess::Auto => match self.model {
                ModelKind::L96 => &q_true * 0.5,
                _ => DMatrix::identity(l, l) * 0.5,
            },
        };
        let r0 = match self.r0 {
            Guess::Scaled(v) => DMatrix::identity(m, m) * v,
            Guess::Auto => match self.model {
                ModelKind::Linear => DMatrix::identity(m, m),
                ModelKind::Triad => DMatrix::identity(m, m) * 0.05,
                ModelKind::L96 | ModelKind::L96Deterministic => DMatrix::identity(m, m) * (r_true.trace() / m as f64),
            },
        };
        let filter = match self.filter {
            FilterKind::Kf => PrimaryFilter::Kalman,
            _ => PrimaryFilter::Etkf {
                ensemble_size: self.ensemble,
                regeneration: match self.regeneration {
                    RegenerationKind::Exact => Regeneration::Exact,
                    RegenerationKind::PrintedExponent => Regeneration::PrintedExponent,
                    RegenerationKind::AdditiveNoise => Regeneration::AdditiveNoise,
                },
            },
        };
        let estimator = self.build_estimator(dynamics.noise_coupling().clone(), &q_true, &r_true, &q0, &r0)?;
        let setup = ExperimentSetup {
            model,
            scheme,
            filter,
            q0,
            r0,
            prior_cov: DMatrix::identity(n, n) * self.prior_var,
            cycles: self.steps,
            spinup: self.spinup,
            seed: self.seed,
        };
        Ok(Plan::Standard(StandardPlan {
            setup,
            estimator,
            q_true,
            r_true,
        }))
    }

    /// Truth model and observation scheme.
    pub fn build_model(&self) -> Result<(Model, ObservationScheme)> {
        match self.model {
            ModelKind::Linear => {
                let lin = LinearModel::benchmark_2d(self.obs == ObsKind::Full);
                let scheme = ObservationScheme::new(lin.h.clone(), lin.r_true.clone(), self.every)?;
                Ok((Model::Linear(lin), scheme))
            }
            ModelKind::Triad => {
                let base = TriadModel::benchmark();
                let triad = TriadModel::new(
                    base.a,
                    base.omega,
                    base.theta,
                    base.d1,
                    base.d2,
                    base.sigma1,
                    base.sigma2,
                    self.dt,
                )?;
                let h = match self.obs {
                    ObsKind::Full => DMatrix::identity(3, 3),
                    ObsKind::Partial => DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
                };
                let m = h.nrows();
                let scheme = ObservationScheme::new(h, DMatrix::identity(m, m) * self.r, self.every)?;
                Ok((Model::Triad(triad), scheme))
            }
            ModelKind::L96 => {
                let (qhat, r_true) = self.l96_covariances();
                let model = L96Model::new(
                    self.n,
                    self.forcing,
                    DMatrix::identity(self.n, self.n),
                    qhat,
                    self.dt,
                    true,
                )?;
                let scheme = ObservationScheme::every_kth_site(self.n, self.obs_stride, r_true, self.every)?;
                Ok((Model::L96(model), scheme))
            }
            ModelKind::L96Deterministic => {
                let model = L96Model::deterministic(self.n, self.forcing, self.dt);
                let scheme = ObservationScheme::new(
                    DMatrix::identity(self.n, self.n),
                    DMatrix::identity(self.n, self.n) * self.r,
                    self.every,
                )?;
                Ok((Model::L96(model), scheme))
            }
        }
    }

    /// Random `Q̂` and `R` for the stochastic ring, drawn from the
    /// covariance stream with eigenvalues uniform on `[0.1, 1]`; `R` is then
    /// scaled to the requested `tr(R)/tr(Q)` with `Q = Q̂ δt`.
    pub fn l96_covariances(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = stream_rng(self.seed, stream::COVARIANCE_DRAW);
        let qhat = random_covariance(&mut rng, self.n, 0.1, 1.0);
        let m = self.n.div_ceil(self.obs_stride);
        let mut r = random_covariance(&mut rng, m, 0.1, 1.0);
        r *= self.ratio * qhat.trace() * self.dt / r.trace();
        (qhat, r)
    }

    fn bases(&self, kind: BasisKind, truth: &DMatrix<f64>, field: &str) -> Result<Vec<DMatrix<f64>>> {
        let d = truth.nrows();
        Ok(match kind {
            BasisKind::Diagonal => diagonal_bases(d),
            BasisKind::Symmetric => symmetric_bases(d),
            BasisKind::Tridiagonal => tridiagonal_bases(d, false),
            BasisKind::Identity => identity_basis(d),
            BasisKind::Block => block_bases(truth, self.block).map_err(|e| Error::Config {
                line: 0,
                field: field.to_string(),
                message: e.to_string(),
            })?,
        })
    }

    fn build_estimator(
        &self,
        gamma: DMatrix<f64>,
        q_true: &DMatrix<f64>,
        r_true: &DMatrix<f64>,
        q0: &DMatrix<f64>,
        r0: &DMatrix<f64>,
    ) -> Result<Option<Box<dyn CovarianceEstimator>>> {
        if self.estimator == EstimatorKind::None {
            return Ok(None);
        }
        let qb = self.bases(self.q_bases, q_true, "estimator.q_bases")?;
        let rb = self.bases(self.r_bases, r_true, "estimator.r_bases")?;
        let param = CovParameterization::from_guess(qb, rb, q0, r0)?;
        Ok(Some(match self.estimator {
            EstimatorKind::Mbl => Box::new(MblEstimator::new(param, gamma, self.lags, self.tau)?),
            EstimatorKind::Bs => {
                let mut bs = BsEstimator::new(param, gamma, self.tau)?;
                bs.btilde_per_basis = self.btilde_per_basis;
                Box::new(bs)
            }
            EstimatorKind::Obl => {
                let weighting = match self.weighting {
                    WeightingKind::Kronecker => Weighting::Kronecker,
                    WeightingKind::Identity => Weighting::Identity,
                };
                Box::new(OblEstimator::new(
                    param,
                    gamma,
                    self.lags,
                    self.est_prior_var,
                    weighting,
                )?)
            }
            EstimatorKind::None => unreachable!(),
        }))
    }

    fn build_letkf(&self) -> Result<LetkfPlan> {
        let forecast_model = L96Model::deterministic(self.n, self.forcing, self.dt);
        let truth_model = forecast_model.clone();
        let scalar = |g: Guess, auto: f64| match g {
            Guess::Scaled(v) => v,
            Guess::Auto => auto,
        };
        let estimator = match self.estimator {
            EstimatorKind::Mbl => Some(LocalEstimator::Mbl {
                lags: self.lags,
                tau: self.tau,
            }),
            EstimatorKind::Obl => Some(LocalEstimator::Obl {
                lags: self.lags,
                prior_var: self.est_prior_var,
            }),
            _ => None,
        };
        let filter = Letkf::new(LetkfConfig {
            localization: LocalizationConfig::new(self.radius, self.n)?,
            estimator,
            q_init: CirculantQParam {
                q1: scalar(self.q0, 0.0),
                q2: 0.0,
            },
            r_init: ScalarRParam {
                r: scalar(self.r0, 0.5),
            },
        })?;
        let setup = LetkfSetup {
            model: forecast_model,
            truth_model,
            r_true: self.r,
            ensemble_size: self.ensemble,
            prior_var: self.prior_var,
            cycles: self.steps,
            spinup: self.spinup,
            every: self.every,
            seed: self.seed,
        };
        Ok(LetkfPlan { setup, filter })
    }
}

/// A run of the Kalman filter or the ETKF with an optional estimator.
pub struct StandardPlan {
    pub setup: ExperimentSetup,
    pub estimator: Option<Box<dyn CovarianceEstimator>>,
    pub q_true: DMatrix<f64>,
    pub r_true: DMatrix<f64>,
}

pub struct LetkfPlan {
    pub setup: LetkfSetup,
    pub filter: Letkf,
}

pub enum Plan {
    Standard(StandardPlan),
    Letkf(LetkfPlan),
}
