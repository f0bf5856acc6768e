//! Property checks shared by the per-module property tests and the
//! acceptance run. Matrices are drawn from a seeded stream so that every
//! case is reproducible from its `(seed, sizes)` input.

#![allow(dead_code)]

use enkf_qr::covest::lag::{propagate_phi, TransitionChain};
use enkf_qr::covest::param::{diagonal_bases, symmetric_bases};
use enkf_qr::covest::{relax, CovParameterization, SecondaryFilter, Weighting};
use enkf_qr::etkf::{etkf_analysis, etkf_forecast, linearize};
use enkf_qr::harness::{apply_scale, expand_grid, ExperimentConfig, RawConfig};
use enkf_qr::harness::{EstimatorKind, ModelKind};
use enkf_qr::kalman::{kf_analysis, kf_forecast};
use enkf_qr::letkf::{local_regions, CirculantQParam, LocalizationConfig};
use enkf_qr::linalg::{clamp_eigenvalues, min_eigenvalue, psd_sqrt};
use enkf_qr::metrics::{error_percentage, mrrmse, rmse, rmse_mmab};
use enkf_qr::models::{l96_drift, random_covariance, simulate};
use enkf_qr::rng::{standard_normal_mat, standard_normal_vec, stream_rng, StreamRng};
use enkf_qr::{DMatrix, DVector, Ensemble, KalmanState, L96Model, LinearModel, ObservationScheme, Regeneration};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 1000;

/// Module names accepted by [`suite`].
pub const MODULES: &[&str] = &[
    "linalg", "models", "kalman", "etkf", "covest", "letkf", "metrics", "harness",
];

fn check<S>(name: &str, strategy: S, test: impl Fn(S::Value) -> Check) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn coefficient_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|k| {
        (
            prop::collection::vec(-1e3f64..1e3, k),
            prop::collection::vec(-1e3f64..1e3, k),
        )
    })
}

fn symmetric_coefficients() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|d| {
        let k = d * (d + 1) / 2;
        (
            Just(d),
            prop::collection::vec(-10.0f64..10.0, k),
            prop::collection::vec(-10.0f64..10.0, k),
        )
    })
}

/// Runs every property of one module at [`CASES`] cases each and returns
/// how many properties were checked.
pub fn suite(module: &str) -> Result<usize, String> {
    let seed = any::<u64>();
    let results = match module {
        "linalg" => vec![check("sqrt and clamp", (seed, 1usize..8), |(s, n)| {
            linalg_sqrt_and_clamp(s, n)
        })],
        "models" => vec![
            check("l96 fixed point", (4usize..64, -20.0f64..20.0), |(n, f)| {
                models_l96_fixed_point(n, f)
            }),
            check("simulate reproducible", (seed, 4usize..10, 1usize..4), |(s, n, e)| {
                models_simulate_reproducible(s, n, e)
            }),
            check(
                "random covariance",
                (seed, 1usize..10, 0.01f64..2.0, 0.0f64..3.0),
                |(s, n, lo, w)| models_random_covariance(s, n, lo, w),
            ),
        ],
        "kalman" => vec![
            check("analysis shrinks", (seed, 1usize..7, 1usize..7), |(s, n, m)| {
                kalman_analysis_shrinks(s, n, m)
            }),
            check("forecast composes", (seed, 1usize..6, 1usize..5), |(s, n, k)| {
                kalman_forecast_composes(s, n, k)
            }),
        ],
        "etkf" => vec![
            check("ensemble centering", (seed, 1usize..8, 2usize..20), |(s, n, ne)| {
                etkf_ensemble_centering(s, n, ne)
            }),
            check(
                "analysis covariances",
                (seed, 1usize..6, 1usize..6, 2usize..12),
                |(s, n, m, ne)| etkf_analysis_covariances(s, n, m, ne),
            ),
            check("linearize", (seed, 1usize..6, 1usize..6, 0usize..6), |(s, n, k, e)| {
                etkf_linearize_recovers_map(s, n, k, e)
            }),
            check("exact regeneration", (seed, 1usize..6, 0usize..6), |(s, n, e)| {
                etkf_regeneration_exact(s, n, e)
            }),
        ],
        "covest" => vec![
            check("relax", (coefficient_pair(), 1.0f64..1e4), |((o, n), t)| {
                covest_relax_contract(o, n, t)
            }),
            check("reconstruction", symmetric_coefficients(), |(d, a, b)| {
                covest_reconstruction_linear(d, a, b)
            }),
            check("phi lag shift", (seed, 1usize..5, 1usize..4), |(s, n, l)| {
                covest_phi_lag_shift(s, n, l)
            }),
            check(
                "secondary filter",
                (seed, 1usize..5, 1usize..5, 0usize..3),
                |(s, m, np, l)| covest_secondary_filter_pd(s, m, np, l),
            ),
        ],
        "letkf" => vec![
            check("regions", (1usize..60, 0usize..12), |(n, r)| letkf_regions(n, r)),
            check(
                "circulant restriction",
                (3usize..60, 1usize..12, -5.0f64..5.0, -5.0f64..5.0),
                |(n, r, a, b)| letkf_circulant_restriction(n, r, a, b),
            ),
        ],
        "metrics" => vec![
            check(
                "nonnegative",
                (seed, 1usize..6, 1usize..6, 1e-3f64..1e3),
                |(s, n, m, c)| metrics_nonnegative(s, n, m, c),
            ),
            check(
                "rmse permutation",
                (prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20), 0usize..20),
                |(v, r)| metrics_rmse_permutation(v, r),
            ),
        ],
        "harness" => vec![
            check(
                "config roundtrip",
                (0usize..4, 1usize..1_000_000, seed, 1.0f64..1e5, 1usize..9, 1usize..7),
                |(m, st, s, t, l, e)| harness_config_roundtrip(m, st, s, t, l, e),
            ),
            check(
                "grid and scale",
                (prop::collection::vec(1usize..5, 0..4), 1usize..100_000, 1usize..1000),
                |(a, st, k)| harness_grid_and_scale(a, st, k),
            ),
        ],
        other => return Err(format!("no property suite named {other}")),
    };
    let count = results.len();
    results.into_iter().collect::<Result<Vec<()>, String>>()?;
    Ok(count)
}

type Check = Result<(), TestCaseError>;

pub fn rng(seed: u64) -> StreamRng {
    stream_rng(seed, 0)
}

pub fn spd(rng: &mut StreamRng, n: usize) -> DMatrix<f64> {
    let a = standard_normal_mat(rng, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).abs().max()
}

fn scale(a: &DMatrix<f64>) -> f64 {
    a.abs().max().max(1.0)
}

fn assert_sym_psd(a: &DMatrix<f64>, what: &str) -> Check {
    prop_assert!(asymmetry(a) <= 1e-12 * scale(a), "{what} not symmetric");
    let lo = min_eigenvalue(a);
    prop_assert!(lo >= -1e-10 * scale(a), "{what} has eigenvalue {lo}");
    Ok(())
}

// ---- linalg helpers used by every filter ----

pub fn linalg_sqrt_and_clamp(seed: u64, n: usize) -> Check {
    let mut r = rng(seed);
    let a = spd(&mut r, n);
    let s = psd_sqrt(&a, 1e-10).unwrap();
    assert_sym_psd(&s, "sqrt")?;
    prop_assert!((&s * &s - &a).abs().max() <= 1e-10 * scale(&a));
    let b = standard_normal_mat(&mut r, n, n);
    let c = clamp_eigenvalues(&(&b + b.transpose()), 1e-10);
    assert_sym_psd(&c, "clamped")
}

// ---- models ----

pub fn models_l96_fixed_point(n: usize, forcing: f64) -> Check {
    let d = l96_drift(&DVector::from_element(n, forcing), forcing);
    prop_assert!(d.iter().all(|&v| v == 0.0), "drift {d}");
    Ok(())
}

pub fn models_simulate_reproducible(seed: u64, n: usize, every: usize) -> Check {
    let mut r = rng(seed);
    let qhat = random_covariance(&mut r, n, 0.1, 1.0);
    let model = L96Model::new(n, 8.0, DMatrix::identity(n, n), qhat, 0.01, true).unwrap();
    let scheme =
        ObservationScheme::every_kth_site(n, 2, DMatrix::identity(n.div_ceil(2), n.div_ceil(2)), every).unwrap();
    let a = simulate(&model, &scheme, 6, seed).unwrap();
    let b = simulate(&model, &scheme, 6, seed).unwrap();
    prop_assert_eq!(a.states, b.states);
    prop_assert_eq!(a.observations.len(), 6 / every);
    for (x, y) in a.observations.iter().zip(&b.observations) {
        prop_assert_eq!(x.step, y.step);
        prop_assert_eq!(&x.y, &y.y);
    }
    Ok(())
}

pub fn models_random_covariance(seed: u64, n: usize, lo: f64, width: f64) -> Check {
    let c = random_covariance(&mut rng(seed), n, lo, lo + width);
    assert_sym_psd(&c, "covariance")?;
    let eig = c.symmetric_eigenvalues();
    let tol = 1e-10 * (lo + width);
    prop_assert!(eig.iter().all(|&v| v >= lo - tol && v <= lo + width + tol), "{eig}");
    Ok(())
}

// ---- kalman ----

pub fn kalman_analysis_shrinks(seed: u64, n: usize, m: usize) -> Check {
    let mut r = rng(seed);
    let b_f = spd(&mut r, n);
    let h = standard_normal_mat(&mut r, m, n);
    let rr = spd(&mut r, m);
    let state = KalmanState::from_prior(standard_normal_vec(&mut r, n), b_f.clone());
    let y = standard_normal_vec(&mut r, m);
    let post = kf_analysis(&state, &y, &h, &rr).unwrap();
    assert_sym_psd(&post.b_a, "B_a")?;
    let diff = &b_f - &post.b_a;
    prop_assert!(min_eigenvalue(&diff) >= -1e-10 * scale(&b_f), "B_f - B_a not PSD");
    prop_assert!((&post.v - (&y - &h * &state.x_f)).abs().max() < 1e-12);
    Ok(())
}

pub fn kalman_forecast_composes(seed: u64, n: usize, steps: usize) -> Check {
    let mut r = rng(seed);
    let f = standard_normal_mat(&mut r, n, n) * (0.9 / n as f64).sqrt();
    let gamma = standard_normal_mat(&mut r, n, n);
    let q = spd(&mut r, n);
    let model = LinearModel::new(f, gamma, q.clone(), DMatrix::identity(n, n), DMatrix::identity(n, n)).unwrap();
    let state = KalmanState::from_prior(standard_normal_vec(&mut r, n), spd(&mut r, n));
    let once = kf_forecast(&state, &model, &q, steps + 1).unwrap();
    assert_sym_psd(&once.b_f, "B_f")?;
    let mut split = kf_forecast(&state, &model, &q, steps).unwrap();
    split.x_a = split.x_f.clone();
    split.b_a = split.b_f.clone();
    let split = kf_forecast(&split, &model, &q, 1).unwrap();
    prop_assert!((&once.b_f - &split.b_f).abs().max() <= 1e-10 * scale(&once.b_f));
    prop_assert!((&once.x_f - &split.x_f).abs().max() <= 1e-10 * once.x_f.abs().max().max(1.0));
    Ok(())
}

// ---- etkf ----

pub fn etkf_ensemble_centering(seed: u64, n: usize, ne: usize) -> Check {
    let mut r = rng(seed);
    let members = standard_normal_mat(&mut r, n, ne) * 3.0 + DMatrix::from_element(n, ne, 5.0);
    let ens = Ensemble::new(members.clone()).unwrap();
    let mean = ens.mean();
    for i in 0..n {
        let avg = members.row(i).sum() / ne as f64;
        prop_assert!((mean[i] - avg).abs() <= 1e-10);
    }
    let u = ens.perturbations();
    prop_assert!(u.column_sum().abs().max() <= 1e-8);
    assert_sym_psd(&ens.covariance(), "sample covariance")
}

pub fn etkf_analysis_covariances(seed: u64, n: usize, m: usize, ne: usize) -> Check {
    let mut r = rng(seed);
    let prior = Ensemble::new(standard_normal_mat(&mut r, n, ne)).unwrap();
    let h = standard_normal_mat(&mut r, m, n);
    let rr = spd(&mut r, m);
    let y = standard_normal_vec(&mut r, m);
    let (post, rec) = etkf_analysis(&prior, &y, |x| &h * x, &rr).unwrap();
    assert_sym_psd(&rec.b_f, "B_f")?;
    assert_sym_psd(&rec.b_a, "B_a")?;
    prop_assert!(min_eigenvalue(&(&rec.b_f - &rec.b_a)) >= -1e-9 * scale(&rec.b_f));
    prop_assert!((post.covariance() - &rec.b_a).abs().max() <= 1e-9 * scale(&rec.b_a));
    prop_assert!(post.perturbations().column_sum().abs().max() <= 1e-8 * scale(&post.members));
    Ok(())
}

pub fn etkf_linearize_recovers_map(seed: u64, n: usize, k: usize, extra: usize) -> Check {
    let mut r = rng(seed);
    let ne = n + 1 + extra;
    let (_, u_in) = enkf_qr::linalg::center_columns(&standard_normal_mat(&mut r, n, ne));
    let a = standard_normal_mat(&mut r, k, n);
    let lin = linearize(&u_in, &(&a * &u_in)).unwrap();
    prop_assert_eq!(lin.rank, n);
    prop_assert!((&lin.matrix - &a).abs().max() <= 1e-8 * scale(&a));
    Ok(())
}

pub fn etkf_regeneration_exact(seed: u64, n: usize, extra: usize) -> Check {
    let mut r = rng(seed);
    let ne = n + 2 + extra;
    let f = standard_normal_mat(&mut r, n, n) * (1.0 / n as f64).sqrt();
    let q = spd(&mut r, n);
    let model = LinearModel::new(
        f,
        DMatrix::identity(n, n),
        q.clone(),
        DMatrix::identity(n, n),
        DMatrix::identity(n, n),
    )
    .unwrap();
    let ens = Ensemble::new(standard_normal_mat(&mut r, n, ne)).unwrap();
    let fc = etkf_forecast(&ens, &model, &q, 1, &mut r, Regeneration::Exact).unwrap();
    assert_sym_psd(&fc.b_f, "target")?;
    let cov = fc.ensemble.covariance();
    prop_assert!((&cov - &fc.b_f).abs().max() <= 1e-8 * scale(&fc.b_f));
    let det_mean = &model.f * ens.mean();
    prop_assert!((fc.ensemble.mean() - det_mean).abs().max() <= 1e-10 * scale(&fc.ensemble.members));
    Ok(())
}

// ---- covest ----

pub fn covest_relax_contract(old: Vec<f64>, new: Vec<f64>, tau: f64) -> Check {
    let o = DVector::from_vec(old);
    let n = DVector::from_vec(new);
    let out = relax(&o, &n, tau).unwrap();
    let ratio = 1.0 - 1.0 / tau;
    for i in 0..o.len() {
        let expect = ratio * (o[i] - n[i]).abs();
        let tol = 1e-12 * (o[i].abs() + n[i].abs()).max(1.0);
        prop_assert!(((out[i] - n[i]).abs() - expect).abs() <= tol);
    }
    let fixed = relax(&n, &n, tau).unwrap();
    prop_assert_eq!(fixed, n.clone());
    // affine: relaxing the midpoint of two old values gives the midpoint of their images
    let mid = relax(&((&o + &n) * 0.5), &n, tau).unwrap();
    let expect = (&out + &n) * 0.5;
    prop_assert!((mid - expect).abs().max() <= 1e-12 * (o.abs().max() + n.abs().max()).max(1.0));
    Ok(())
}

pub fn covest_reconstruction_linear(d: usize, a: Vec<f64>, b: Vec<f64>) -> Check {
    let p = CovParameterization::new(
        symmetric_bases(d),
        diagonal_bases(d),
        DVector::zeros(d * (d + 1) / 2),
        DVector::zeros(d),
    )
    .unwrap();
    let a = DVector::from_vec(a);
    let b = DVector::from_vec(b);
    let sum = p.reconstruct_q(&(&a + &b));
    prop_assert_eq!(sum, p.reconstruct_q(&a) + p.reconstruct_q(&b));
    let back = p.project_q(&p.reconstruct_q(&a)).unwrap();
    prop_assert!((back - &a).abs().max() <= 1e-12 * a.abs().max().max(1.0));
    Ok(())
}

pub fn covest_phi_lag_shift(seed: u64, n: usize, lags: usize) -> Check {
    let mut r = rng(seed);
    let p = CovParameterization::new(
        diagonal_bases(n),
        diagonal_bases(n),
        DVector::from_element(n, 1.0),
        DVector::from_element(n, 1.0),
    )
    .unwrap();
    let mut sym = || {
        let a = standard_normal_mat(&mut r, n, n);
        &a * a.transpose()
    };
    let mut phi_q: Vec<Vec<DMatrix<f64>>> = (0..=lags).map(|_| (0..n).map(|_| sym()).collect()).collect();
    let mut phi_r: Vec<Vec<DMatrix<f64>>> = (0..=lags).map(|_| (0..n).map(|_| sym()).collect()).collect();
    let (old_q, old_r) = (phi_q.clone(), phi_r.clone());
    let u = standard_normal_mat(&mut r, n, n);
    let s_mat = standard_normal_mat(&mut r, n, n);
    let chain = TransitionChain::new(&[standard_normal_mat(&mut r, n, n)], &DMatrix::identity(n, n)).unwrap();
    propagate_phi(&mut phi_q, &mut phi_r, &u, &s_mat, &chain, &p);
    for l in 1..=lags {
        for s in 0..n {
            let eq = (&phi_q[l][s] - &u * &old_q[l - 1][s]).abs().max();
            let er = (&phi_r[l][s] - &u * &old_r[l - 1][s]).abs().max();
            prop_assert!(eq <= 1e-12 * scale(&phi_q[l][s]) && er <= 1e-12 * scale(&phi_r[l][s]));
        }
    }
    for s in 0..n {
        prop_assert!(asymmetry(&phi_q[0][s]) <= 1e-8 * scale(&phi_q[0][s]));
        prop_assert!(asymmetry(&phi_r[0][s]) <= 1e-8 * scale(&phi_r[0][s]));
    }
    Ok(())
}

pub fn covest_secondary_filter_pd(seed: u64, m: usize, np: usize, lag: usize) -> Check {
    let mut r = rng(seed);
    let mut f = SecondaryFilter::new(standard_normal_vec(&mut r, np), spd(&mut r, np), Weighting::Kronecker).unwrap();
    let ops: Vec<DMatrix<f64>> = (0..np).map(|_| standard_normal_mat(&mut r, m, m)).collect();
    let refs: Vec<&DMatrix<f64>> = ops.iter().collect();
    let c_inv = enkf_qr::linalg::inverse_spd(&spd(&mut r, m), "C").unwrap();
    let before = f.p_theta.clone();
    for _ in 0..3 {
        let y = standard_normal_mat(&mut r, m, m);
        f.assimilate(&y, &refs, Some(&c_inv), lag);
    }
    prop_assert!(asymmetry(&f.p_theta) <= 1e-12 * scale(&f.p_theta));
    prop_assert!(min_eigenvalue(&f.p_theta) > 0.0);
    prop_assert!(min_eigenvalue(&(&before - &f.p_theta)) >= -1e-9 * scale(&before));
    Ok(())
}

// ---- letkf ----

pub fn letkf_regions(n: usize, radius: usize) -> Check {
    let cfg = LocalizationConfig::new(radius, n).unwrap();
    let regions = local_regions(&cfg);
    prop_assert_eq!(regions.len(), n);
    let mut covered = vec![false; n];
    for (i, reg) in regions.iter().enumerate() {
        prop_assert_eq!(reg.sites[reg.centre], i);
        if cfg.is_global() {
            prop_assert_eq!(reg.len(), n);
        } else {
            prop_assert_eq!(reg.len(), 2 * radius + 1);
            for w in reg.sites.windows(2) {
                prop_assert_eq!(w[1], (w[0] + 1) % n);
            }
        }
        for &s in &reg.sites {
            covered[s] = true;
        }
    }
    prop_assert!(covered.iter().all(|&c| c));
    Ok(())
}

pub fn letkf_circulant_restriction(n: usize, radius: usize, q1: f64, q2: f64) -> Check {
    let q = CirculantQParam { q1, q2 };
    let global = q.matrix(n);
    prop_assert_eq!(&global, &global.transpose());
    let cfg = LocalizationConfig::new(radius, n).unwrap();
    let regions = local_regions(&cfg);
    let (mut s1, mut s2) = (0.0, 0.0);
    for reg in &regions {
        let d = reg.len();
        let local = DMatrix::from_fn(d, d, |i, j| global[(reg.sites[i], reg.sites[j])]);
        let p = CirculantQParam::project(&local, cfg.is_global()).unwrap();
        s1 += p.q1;
        s2 += p.q2;
    }
    let k = regions.len() as f64;
    let tol = 1e-12 * q1.abs().max(q2.abs()).max(1.0);
    prop_assert!((s1 / k - q1).abs() <= tol && (s2 / k - q2).abs() <= tol);
    Ok(())
}

// ---- metrics ----

pub fn metrics_nonnegative(seed: u64, n: usize, m: usize, c: f64) -> Check {
    let mut r = rng(seed);
    let q = spd(&mut r, n);
    let rr = spd(&mut r, m);
    let qe = spd(&mut r, n);
    let re = spd(&mut r, m);
    prop_assert!(mrrmse(&qe, &re, &q, &rr).unwrap() >= 0.0);
    prop_assert_eq!(mrrmse(&q, &rr, &q, &rr).unwrap(), 0.0);
    let e = error_percentage(&qe, &q).unwrap();
    prop_assert!(e >= 0.0);
    prop_assert_eq!(error_percentage(&q, &q).unwrap(), 0.0);
    let scaled = error_percentage(&(&qe * c), &(&q * c)).unwrap();
    prop_assert!((scaled - e).abs() <= 1e-9 * e.max(1.0));
    let series = [(qe.clone(), re.clone()), (q.clone(), rr.clone())];
    let (a, b) = rmse_mmab(&[&series[..]], &q, &rr, 2).unwrap();
    prop_assert!(a >= 0.0 && b >= 0.0);
    let exact = [(q.clone(), rr.clone())];
    prop_assert_eq!(rmse_mmab(&[&exact[..]], &q, &rr, 1).unwrap(), (0.0, 0.0));
    Ok(())
}

pub fn metrics_rmse_permutation(values: Vec<(f64, f64)>, rotate: usize) -> Check {
    let est = DVector::from_iterator(values.len(), values.iter().map(|v| v.0));
    let truth = DVector::from_iterator(values.len(), values.iter().map(|v| v.1));
    let base = rmse(&est, &truth);
    prop_assert!(base >= 0.0);
    let mut rotated = values.clone();
    rotated.rotate_left(rotate % values.len());
    let est2 = DVector::from_iterator(values.len(), rotated.iter().map(|v| v.0));
    let truth2 = DVector::from_iterator(values.len(), rotated.iter().map(|v| v.1));
    prop_assert!((rmse(&est2, &truth2) - base).abs() <= 1e-12 * base.max(1.0));
    prop_assert_eq!(rmse(&truth, &truth), 0.0);
    Ok(())
}

// ---- harness ----

pub fn harness_config_roundtrip(model: usize, steps: usize, seed: u64, tau: f64, lags: usize, every: usize) -> Check {
    let kind: ModelKind = ModelKind::ALL[model % ModelKind::ALL.len()].parse().unwrap();
    let mut cfg = ExperimentConfig::defaults(kind);
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.tau = tau;
    cfg.lags = lags;
    cfg.every = every;
    if cfg.estimator != EstimatorKind::Mbl {
        cfg.estimator = EstimatorKind::Mbl;
    }
    let text = cfg.to_raw().to_text();
    let back = ExperimentConfig::from_raw(&RawConfig::parse(&text).unwrap()).unwrap();
    prop_assert_eq!(back, cfg);
    Ok(())
}

pub fn harness_grid_and_scale(axes: Vec<usize>, steps: usize, k: usize) -> Check {
    let mut text = String::from("steps = ");
    text.push_str(&steps.to_string());
    text.push('\n');
    for (i, len) in axes.iter().enumerate() {
        let values: Vec<String> = (0..*len).map(|v| v.to_string()).collect();
        text.push_str(&format!("sweep.axis{i} = {}\n", values.join(", ")));
    }
    let mut raw = RawConfig::parse(&text).unwrap();
    let cells = expand_grid(&raw).unwrap();
    prop_assert_eq!(cells.len(), axes.iter().product::<usize>());
    for (assignment, cfg) in &cells {
        prop_assert_eq!(assignment.len(), axes.len());
        prop_assert!(cfg.sweep_axes().unwrap().is_empty());
    }
    apply_scale(&mut raw, k).unwrap();
    prop_assert_eq!(raw.field("steps", 0usize).unwrap(), (steps / k).max(1));
    Ok(())
}
