//! Truth and forecast models, and synthetic observation generation.
//!
//! Every model is written as a one-step stochastic map
//! `x ← f(x) + Γ w` where `w ~ N(0, Q)` and `Q` is the covariance the
//! estimators try to recover. For the SDE models the discretisation folds
//! the `√δt` Euler-Maruyama scaling into either `Γ` (triad) or `Q` (L96), so
//! that the reported `Q` matches the quantity being estimated.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::rng::{random_orthogonal, standard_normal_vec, stream, stream_rng};

/// Eigenvalue tolerance accepted as roundoff when factoring a covariance.
pub const FACTOR_TOL: f64 = 1e-12;

/// A discrete-time stochastic model advanced one integration step at a time.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn noise_dim(&self) -> usize {
        self.noise_coupling().ncols()
    }

    /// Deterministic part of one integration step.
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Discrete noise coupling `Γ` (n × ℓ).
    fn noise_coupling(&self) -> &DMatrix<f64>;

    /// True discrete noise covariance `Q` (ℓ × ℓ).
    fn q_true(&self) -> &DMatrix<f64>;

    /// A factor `L` with `L Lᵀ = Q`.
    fn q_factor(&self) -> &DMatrix<f64>;

    /// The exact transition matrix for linear models.
    fn transition(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn initial_state(&self) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }

    /// One stochastic step driven by a standard normal draw `z` (dim ℓ).
    fn step_standard(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let w = self.q_factor() * z;
        self.propagate(x) + self.noise_coupling() * w
    }
}

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::invalid(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidCovariance(format!(
            "{name} is not symmetric (|A-Aᵀ| = {asym:.3e})"
        )));
    }
    Ok(())
}

fn factor(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(name, m)?;
    psd_sqrt(m, FACTOR_TOL).map_err(|e| Error::InvalidCovariance(format!("{name}: {e}")))
}

/// `x_j = F x_{j-1} + Γ w_{j-1}`, `y_j = H x_j + ξ_j`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub f: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub q_true: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r_true: DMatrix<f64>,
    q_factor: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(
        f: DMatrix<f64>,
        gamma: DMatrix<f64>,
        q_true: DMatrix<f64>,
        h: DMatrix<f64>,
        r_true: DMatrix<f64>,
    ) -> Result<Self> {
        let n = f.nrows();
        check_square("F", &f, n)?;
        if gamma.nrows() != n {
            return Err(Error::invalid("Γ must have n rows"));
        }
        check_square("Q", &q_true, gamma.ncols())?;
        if h.ncols() != n {
            return Err(Error::invalid("H must have n columns"));
        }
        check_square("R", &r_true, h.nrows())?;
        let q_factor = factor("Q", &q_true)?;
        factor("R", &r_true)?;
        Ok(Self {
            f,
            gamma,
            q_true,
            h,
            r_true,
            q_factor,
        })
    }

    /// The two-dimensional benchmark system with `Q = I` and `R = 0.5 I`.
    /// `full_obs` selects `H = I` rather than observing the first component only.
    pub fn benchmark_2d(full_obs: bool) -> Self {
        let f = DMatrix::from_row_slice(2, 2, &[0.75, -1.74, 0.09, 0.91]);
        let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.1, 1.0]);
        let (h, r) = if full_obs {
            (DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 0.5)
        } else {
            (
                DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
                DMatrix::from_element(1, 1, 0.5),
            )
        };
        Self::new(f, gamma, DMatrix::identity(2, 2), h, r).expect("benchmark parameters are valid")
    }

    pub fn observation_scheme(&self) -> ObservationScheme {
        ObservationScheme::new(self.h.clone(), self.r_true.clone(), 1).expect("validated at construction")
    }

    /// `F x + Γ w`.
    pub fn step(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.f.nrows() || w.len() != self.gamma.ncols() {
            return Err(Error::invalid(format!(
                "step_linear: dim(x)={}, dim(w)={}, expected {} and {}",
                x.len(),
                w.len(),
                self.f.nrows(),
                self.gamma.ncols()
            )));
        }
        Ok(&self.f * x + &self.gamma * w)
    }
}

impl Dynamics for LinearModel {
    fn state_dim(&self) -> usize {
        self.f.nrows()
    }
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f * x
    }
    fn noise_coupling(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    fn q_true(&self) -> &DMatrix<f64> {
        &self.q_true
    }
    fn q_factor(&self) -> &DMatrix<f64> {
        &self.q_factor
    }
    fn transition(&self) -> Option<&DMatrix<f64>> {
        Some(&self.f)
    }
}

/// Triad model `dx/dt = M x + B(x,x) − D x + Γ dW/dt`, `x = (u, v₁, v₂)`,
/// integrated with explicit Euler-Maruyama.
#[derive(Debug, Clone)]
pub struct TriadModel {
    pub a: f64,
    pub omega: f64,
    pub theta: f64,
    pub d1: f64,
    pub d2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub dt: f64,
    /// Covariance of the Wiener increments per unit time.
    pub q_true: DMatrix<f64>,
    m: DMatrix<f64>,
    gamma_dt: DMatrix<f64>,
    q_factor: DMatrix<f64>,
}

impl TriadModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: f64, omega: f64, theta: f64, d1: f64, d2: f64, sigma1: f64, sigma2: f64, dt: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(Error::invalid("triad damping rates must be positive"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let m = DMatrix::from_row_slice(3, 3, &[0.0, omega, 0.0, -2.0 * omega, 0.0, -theta, 0.0, theta, 0.0]);
        let gamma = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, sigma1, 0.0, 0.0, sigma2]);
        let q_true = DMatrix::identity(2, 2);
        Ok(Self {
            a,
            omega,
            theta,
            d1,
            d2,
            sigma1,
            sigma2,
            dt,
            q_factor: q_true.clone(),
            q_true,
            m,
            gamma_dt: gamma * dt.sqrt(),
        })
    }

    /// `a = 1, ω = 3/4, θ = 1, d = σ² = 1/2, δt = 0.1`.
    pub fn benchmark() -> Self {
        let s = 0.5_f64.sqrt();
        Self::new(1.0, 0.75, 1.0, 0.5, 0.5, s, s, 0.1).expect("benchmark parameters are valid")
    }

    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (u, v1, v2) = (x[0], x[1], x[2]);
        let mut dx = &self.m * x;
        dx[1] += self.a * u * v2 - self.d1 * v1;
        dx[2] += -self.a * u * v1 - self.d2 * v2;
        dx
    }

    /// `x + δt·drift(x) + Γ √δt w` with `w` standard normal.
    pub fn step(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != 3 || w.len() != 2 {
            return Err(Error::invalid("step_triad expects x ∈ ℝ³ and w ∈ ℝ²"));
        }
        Ok(self.propagate(x) + &self.gamma_dt * w)
    }
}

impl Dynamics for TriadModel {
    fn state_dim(&self) -> usize {
        3
    }
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        x + self.drift(x) * self.dt
    }
    fn noise_coupling(&self) -> &DMatrix<f64> {
        &self.gamma_dt
    }
    fn q_true(&self) -> &DMatrix<f64> {
        &self.q_true
    }
    fn q_factor(&self) -> &DMatrix<f64> {
        &self.q_factor
    }
}

/// Lorenz-96 ring `dxᵢ/dt = (x_{i+1} − x_{i−2}) x_{i−1} − xᵢ + F + Γᵢ dW/dt`.
///
/// The drift is advanced with RK4 and the noise with Euler-Maruyama. The
/// estimated covariance is `Q = Q̂ δt`.
#[derive(Debug, Clone)]
pub struct L96Model {
    pub n: usize,
    pub forcing: f64,
    pub gamma: DMatrix<f64>,
    pub qhat: DMatrix<f64>,
    pub dt: f64,
    pub stochastic: bool,
    q_true: DMatrix<f64>,
    q_factor: DMatrix<f64>,
}

impl L96Model {
    pub fn new(
        n: usize,
        forcing: f64,
        gamma: DMatrix<f64>,
        qhat: DMatrix<f64>,
        dt: f64,
        stochastic: bool,
    ) -> Result<Self> {
        if n < 4 {
            return Err(Error::invalid("Lorenz-96 needs n >= 4"));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if gamma.nrows() != n {
            return Err(Error::invalid("Γ must have n rows"));
        }
        check_square("Q̂", &qhat, gamma.ncols())?;
        let qhat_factor = factor("Q̂", &qhat)?;
        let (q_true, q_factor) = if stochastic {
            (&qhat * dt, qhat_factor * dt.sqrt())
        } else {
            let l = gamma.ncols();
            (DMatrix::zeros(l, l), DMatrix::zeros(l, l))
        };
        Ok(Self {
            n,
            forcing,
            gamma,
            qhat,
            dt,
            stochastic,
            q_true,
            q_factor,
        })
    }

    /// Deterministic ring with `Γ = I` and no forcing noise.
    pub fn deterministic(n: usize, forcing: f64, dt: f64) -> Self {
        Self::new(n, forcing, DMatrix::identity(n, n), DMatrix::zeros(n, n), dt, false)
            .expect("valid deterministic configuration")
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        l96_drift(x, self.forcing)
    }

    fn rk4(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = self.dt;
        let k1 = self.drift(x);
        let k2 = self.drift(&(x + &k1 * (0.5 * h)));
        let k3 = self.drift(&(x + &k2 * (0.5 * h)));
        let k4 = self.drift(&(x + &k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    /// `RK4(x) + Γ √δt L w` with `L Lᵀ = Q̂` and `w` standard normal.
    pub fn step(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n || w.len() != self.gamma.ncols() {
            return Err(Error::invalid("step_l96 dimension mismatch"));
        }
        Ok(self.step_standard(x, w))
    }
}

/// Lorenz-96 tendency on a ring.
pub fn l96_drift(x: &DVector<f64>, forcing: f64) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |i, _| {
        let ip1 = x[(i + 1) % n];
        let im1 = x[(i + n - 1) % n];
        let im2 = x[(i + n - 2) % n];
        (ip1 - im2) * im1 - x[i] + forcing
    })
}

impl Dynamics for L96Model {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        self.rk4(x)
    }
    fn noise_coupling(&self) -> &DMatrix<f64> {
        &self.gamma
    }
    fn q_true(&self) -> &DMatrix<f64> {
        &self.q_true
    }
    fn q_factor(&self) -> &DMatrix<f64> {
        &self.q_factor
    }
    fn initial_state(&self) -> DVector<f64> {
        let mut x = DVector::from_element(self.n, self.forcing);
        x[0] += 0.01;
        x
    }
}

/// Linear observations `y = H x + ξ`, `ξ ~ N(0, R)`, every `every` steps.
#[derive(Debug, Clone)]
pub struct ObservationScheme {
    pub h: DMatrix<f64>,
    pub r_true: DMatrix<f64>,
    pub every: usize,
    r_factor: DMatrix<f64>,
}

impl ObservationScheme {
    pub fn new(h: DMatrix<f64>, r_true: DMatrix<f64>, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::invalid("observation interval N must be >= 1"));
        }
        check_square("R", &r_true, h.nrows())?;
        let r_factor = factor("R", &r_true)?;
        Ok(Self {
            h,
            r_true,
            every,
            r_factor,
        })
    }

    /// Observes every `stride`-th component of an `n`-dimensional state.
    pub fn every_kth_site(n: usize, stride: usize, r_true: DMatrix<f64>, every: usize) -> Result<Self> {
        let sites: Vec<usize> = (0..n).step_by(stride).collect();
        let mut h = DMatrix::zeros(sites.len(), n);
        for (row, &s) in sites.iter().enumerate() {
            h[(row, s)] = 1.0;
        }
        Self::new(h, r_true, every)
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn observe<R: Rng + ?Sized>(&self, x: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let z = standard_normal_vec(rng, self.obs_dim());
        &self.h * x + &self.r_factor * z
    }
}

/// Random SPD matrix whose eigenvalues are uniform on `[lo, hi]`, conjugated
/// by a Haar orthogonal matrix.
pub fn random_covariance<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, n);
    let eig: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(eig));
    let mut c = &q * d * q.transpose();
    crate::linalg::symmetrize_mut(&mut c);
    c
}

#[derive(Debug, Clone)]
pub struct Observation {
    /// Integration step at which the observation was taken.
    pub step: usize,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States at integration steps `0..=steps`.
    pub states: Vec<DVector<f64>>,
    pub observations: Vec<Observation>,
}

/// Runs the truth for `steps` integration steps from the model's initial
/// state, observing after every `scheme.every` steps.
pub fn simulate(model: &dyn Dynamics, scheme: &ObservationScheme, steps: usize, seed: u64) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::invalid("simulate needs steps >= 1"));
    }
    if scheme.h.ncols() != model.state_dim() {
        return Err(Error::invalid("observation matrix does not match the state dimension"));
    }
    let mut stream = TruthStream::new(model, scheme, model.initial_state(), seed);
    let mut states = Vec::with_capacity(steps + 1);
    states.push(stream.state().clone());
    let mut observations = Vec::with_capacity(steps / scheme.every);
    for k in 1..=steps {
        stream.advance();
        states.push(stream.state().clone());
        if k % scheme.every == 0 {
            observations.push(Observation {
                step: k,
                y: stream.observe(),
            });
        }
    }
    Ok(Trajectory { states, observations })
}

/// Streaming truth generator with separate noise streams for the dynamics
/// and for the observations.
pub struct TruthStream<'a> {
    model: &'a dyn Dynamics,
    scheme: &'a ObservationScheme,
    x: DVector<f64>,
    dyn_rng: crate::rng::StreamRng,
    obs_rng: crate::rng::StreamRng,
}

impl<'a> TruthStream<'a> {
    pub fn new(model: &'a dyn Dynamics, scheme: &'a ObservationScheme, x0: DVector<f64>, seed: u64) -> Self {
        Self {
            model,
            scheme,
            x: x0,
            dyn_rng: stream_rng(seed, stream::TRUTH_NOISE),
            obs_rng: stream_rng(seed, stream::OBS_NOISE),
        }
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn advance(&mut self) {
        let z = standard_normal_vec(&mut self.dyn_rng, self.model.noise_dim());
        self.x = self.model.step_standard(&self.x, &z);
    }

    pub fn observe(&mut self) -> DVector<f64> {
        self.scheme.observe(&self.x, &mut self.obs_rng)
    }

    /// Advances one observation interval and returns `(truth, y)`.
    pub fn next_cycle(&mut self) -> (DVector<f64>, DVector<f64>) {
        for _ in 0..self.scheme.every {
            self.advance();
        }
        let y = self.observe();
        (self.x.clone(), y)
    }
}
