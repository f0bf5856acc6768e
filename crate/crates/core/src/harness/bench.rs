//! Per-step cost of the two lagged estimators as the observation count grows.
//!
//! Only the estimator-specific work is timed: the stacked least-squares
//! accumulate-and-solve for MBL, and the inverse innovation covariance plus
//! the secondary-filter analyses for OBL. The lagged covariance recursions
//! are shared by both and excluded.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::config::RawConfig;
use crate::covest::lag::HOperators;
use crate::covest::mbl::StackedLeastSquares;
use crate::covest::obl::{assimilate_all, SecondaryFilter, Weighting};
use crate::error::{Error, Result};
use crate::linalg::inverse_spd;
use crate::rng::{standard_normal_mat, stream, stream_rng};

/// Smallest accepted repetition count.
pub const MIN_REPS: usize = 5;

/// Each repetition runs enough steps to last at least this long.
const MIN_REP_SECONDS: f64 = 2e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub m: usize,
    /// Median seconds per estimator step.
    pub mbl_seconds: f64,
    pub obl_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub np: usize,
    pub lags: usize,
    pub reps: usize,
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln t` against `ln m`.
    pub mbl_slope: f64,
    pub obl_slope: f64,
}

impl BenchTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["m", "mbl_seconds", "obl_seconds"])?;
        for r in &self.rows {
            wtr.write_record([
                r.m.to_string(),
                format!("{:e}", r.mbl_seconds),
                format!("{:e}", r.obl_seconds),
            ])?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// `bench.m_list`, `bench.np`, `bench.lags` and `bench.reps` from a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub m_list: Vec<usize>,
    pub np: usize,
    pub lags: usize,
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_list: vec![10, 20, 40, 80],
            np: 4,
            lags: 1,
            reps: MIN_REPS,
        }
    }
}

impl BenchConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let d = Self::default();
        for e in raw.entries() {
            if !["bench.m_list", "bench.np", "bench.lags", "bench.reps"].contains(&e.key.as_str()) {
                return Err(raw.error(&e.key, "the bench command only reads bench.* keys"));
            }
        }
        let m_list = match raw.get("bench.m_list") {
            None => d.m_list,
            Some(e) => e
                .value
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|err| raw.error("bench.m_list", format!("expected comma-separated sizes: {err}")))?,
        };
        let c = Self {
            m_list,
            np: raw.field("bench.np", d.np)?,
            lags: raw.field("bench.lags", d.lags)?,
            reps: raw.field("bench.reps", d.reps)?,
        };
        if c.reps < MIN_REPS {
            return Err(raw.error("bench.reps", format!("must be at least {MIN_REPS}")));
        }
        Ok(c)
    }
}

/// Log-log slope by ordinary least squares.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Symmetric band with ones on the `k`-th off-diagonals (the identity for `k = 0`).
fn band(m: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i.abs_diff(j) == k { 1.0 } else { 0.0 })
}

struct Workload {
    hops: HOperators,
    products: Vec<DMatrix<f64>>,
    c: DMatrix<f64>,
    n_q: usize,
}

fn workload(m: usize, np: usize, lags: usize, seed: u64) -> Workload {
    let mut rng = stream_rng(seed, stream::BENCH);
    let n_q = np / 2;
    let mut block = |_l: usize| -> Vec<DMatrix<f64>> {
        (0..np)
            .map(|s| {
                let k = if s < n_q { s } else { s - n_q };
                band(m, k) + standard_normal_mat(&mut rng, m, m) * 0.1
            })
            .collect()
    };
    let blocks: Vec<Vec<DMatrix<f64>>> = (0..=lags).map(&mut block).collect();
    let hops = HOperators {
        q: blocks.iter().map(|b| b[..n_q].to_vec()).collect(),
        r: blocks.iter().map(|b| b[n_q..].to_vec()).collect(),
    };
    let products = (0..=lags).map(|_| standard_normal_mat(&mut rng, m, m)).collect();
    let a = standard_normal_mat(&mut rng, m, m);
    let c = &a * a.transpose() / m as f64 + DMatrix::identity(m, m);
    Workload { hops, products, c, n_q }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median seconds per call of `step` over `reps` repetitions.
fn time_per_step(reps: usize, mut step: impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    step()?;
    let once = start.elapsed().as_secs_f64().max(1e-9);
    let iters = ((MIN_REP_SECONDS / once).ceil() as usize).clamp(1, 100_000);
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        for _ in 0..iters {
            step()?;
        }
        samples.push(t.elapsed().as_secs_f64() / iters as f64);
    }
    Ok(median(samples))
}

/// Times both estimators for every `m` in `m_list` with `np` parameters
/// (split evenly between `Q` and `R` bases) and `lags` lags.
pub fn bench_complexity(m_list: &[usize], np: usize, lags: usize, reps: usize) -> Result<BenchTable> {
    if reps < MIN_REPS {
        return Err(Error::invalid(format!("bench needs reps >= {MIN_REPS}, got {reps}")));
    }
    if m_list.len() < 2 || m_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("m_list must hold at least two strictly ascending sizes"));
    }
    if np < 2 || m_list[0] <= np / 2 {
        return Err(Error::invalid("need np >= 2 and every m larger than the band count"));
    }
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let w = workload(m, np, lags, m as u64);
        let mut ls = StackedLeastSquares::new(m, lags, w.n_q, np - w.n_q);
        let mbl_seconds = time_per_step(reps, || {
            ls.accumulate(&w.products, &w.hops)?;
            std::hint::black_box(ls.solve());
            Ok(())
        })?;
        let mut filter = SecondaryFilter::new(
            DVector::from_element(np, 1.0),
            DMatrix::identity(np, np),
            Weighting::Kronecker,
        )?;
        let obl_seconds = time_per_step(reps, || {
            let c_inv = inverse_spd(&w.c, "innovation covariance")?;
            assimilate_all(&mut filter, &w.products, &w.hops, Some(&c_inv));
            std::hint::black_box(&filter.theta);
            Ok(())
        })?;
        rows.push(BenchRow {
            m,
            mbl_seconds,
            obl_seconds,
        });
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let mbl: Vec<f64> = rows.iter().map(|r| r.mbl_seconds).collect();
    let obl: Vec<f64> = rows.iter().map(|r| r.obl_seconds).collect();
    Ok(BenchTable {
        np,
        lags,
        reps,
        mbl_slope: loglog_slope(&ms, &mbl),
        obl_slope: loglog_slope(&ms, &obl),
        rows,
    })
}
