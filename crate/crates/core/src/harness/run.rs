//! `run`, `sweep` and `simulate`: execute configurations and persist results.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::RawConfig;
use super::{ExperimentConfig, LetkfPlan, Plan, StandardPlan};
use crate::error::Result;
use crate::experiment::{run_experiment, run_letkf, CycleStatus};
use crate::matrix_io::write_matrix;
use crate::metrics::{error_percentage, mrrmse};
use crate::models::TruthStream;

/// Shortest round-trip decimal; very large or small values use an exponent.
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Outcome of one run. Tail statistics average over the second half of the
/// cycles; for the localized filter they skip the first tenth instead.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cycles: usize,
    pub underdetermined_rows: usize,
    pub pseudo_inverse_rows: usize,
    /// `100 ‖Q̃ − Q‖/‖Q‖` averaged over the tail; `None` when `Q = 0`.
    pub tail_q_err_pct: Option<f64>,
    pub tail_r_err_pct: Option<f64>,
    pub tail_mrrmse: Option<f64>,
    /// Mean analysis RMSE over the tail.
    pub mrmse: f64,
    pub final_q: DMatrix<f64>,
    pub final_r: DMatrix<f64>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), num);
        format!(
            "cycles = {}\nunderdetermined_rows = {}\npseudo_inverse_rows = {}\ntail_q_err_pct = {}\ntail_r_err_pct = {}\ntail_mrrmse = {}\nmrmse = {}\n",
            self.cycles,
            self.underdetermined_rows,
            self.pseudo_inverse_rows,
            opt(self.tail_q_err_pct),
            opt(self.tail_r_err_pct),
            opt(self.tail_mrrmse),
            num(self.mrmse),
        )
    }
}

/// Running mean over cycles `> start`.
#[derive(Default)]
struct TailMean {
    sum: f64,
    count: usize,
    defined: bool,
}

impl TailMean {
    fn new() -> Self {
        Self {
            defined: true,
            ..Default::default()
        }
    }
    fn push(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.sum += x;
                self.count += 1;
            }
            None => self.defined = false,
        }
    }
    fn get(&self) -> Option<f64> {
        (self.defined && self.count > 0).then(|| self.sum / self.count as f64)
    }
}

/// Runs one configuration, writing `trace.csv` (or `diagnostics.csv` for the
/// localized filter), `summary.txt`, `q_est.txt`, `r_est.txt` and
/// `manifest.txt` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let started = Instant::now();
    let mut summary = match cfg.build()? {
        Plan::Standard(plan) => run_standard(plan, out)?,
        Plan::Letkf(plan) => run_localized(plan, out)?,
    };
    summary.wall_clock_seconds = started.elapsed().as_secs_f64();
    fs::write(out.join("summary.txt"), summary.to_text())?;
    write_matrix(&out.join("q_est.txt"), &summary.final_q)?;
    write_matrix(&out.join("r_est.txt"), &summary.final_r)?;
    let mut manifest = cfg.to_raw().to_text();
    manifest.push_str(&format!("# wall_clock_seconds = {:.3}\n", summary.wall_clock_seconds));
    manifest.push_str(&format!("# underdetermined_rows = {}\n", summary.underdetermined_rows));
    if summary.underdetermined_rows > 0 {
        manifest.push_str("# underdetermined cycles kept the previous estimates\n");
    }
    fs::write(out.join("manifest.txt"), manifest)?;
    Ok(summary)
}

fn relative_error(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Option<f64> {
    error_percentage(est, truth).ok()
}

fn run_standard(plan: StandardPlan, out: &Path) -> Result<RunSummary> {
    let StandardPlan {
        setup,
        estimator,
        q_true,
        r_true,
    } = plan;
    let (nq, nr) = estimator
        .as_ref()
        .map_or((0, 0), |e| (e.parameterization().n_q(), e.parameterization().n_r()));
    let mut wtr = csv::Writer::from_path(out.join("trace.csv"))?;
    let mut header = vec!["step".to_string()];
    header.extend((1..=nq).map(|i| format!("alpha_{i}")));
    header.extend((1..=nr).map(|i| format!("beta_{i}")));
    header.extend(["q_frob_err", "r_frob_err", "status"].map(String::from));
    wtr.write_record(&header)?;

    let tail_start = setup.cycles / 2;
    let (mut q_pct, mut r_pct, mut mrr, mut state) =
        (TailMean::new(), TailMean::new(), TailMean::new(), TailMean::new());
    let (mut under, mut pinv) = (0, 0);
    let mut last = (setup.q0.clone(), setup.r0.clone());
    run_experiment(&setup, estimator, |rec| {
        let mut row = vec![rec.cycle.to_string()];
        if let (Some(a), Some(b)) = (&rec.alpha, &rec.beta) {
            row.extend(a.iter().chain(b.iter()).map(|v| num(*v)));
        }
        row.push(num((&rec.q_est - &q_true).norm()));
        row.push(num((&rec.r_est - &r_true).norm()));
        row.push(rec.status.label().to_string());
        wtr.write_record(&row)?;
        match rec.status {
            CycleStatus::Underdetermined => under += 1,
            CycleStatus::Update(crate::covest::UpdateStatus::PseudoInverse) => pinv += 1,
            _ => {}
        }
        if rec.cycle > tail_start {
            q_pct.push(relative_error(&rec.q_est, &q_true));
            r_pct.push(relative_error(&rec.r_est, &r_true));
            mrr.push(mrrmse(&rec.q_est, &rec.r_est, &q_true, &r_true).ok());
            state.push(Some(rec.analysis_rmse()));
        }
        if rec.cycle == setup.cycles {
            last = (rec.q_est.clone(), rec.r_est.clone());
        }
        Ok(())
    })?;
    wtr.flush()?;
    Ok(RunSummary {
        cycles: setup.cycles,
        underdetermined_rows: under,
        pseudo_inverse_rows: pinv,
        tail_q_err_pct: q_pct.get(),
        tail_r_err_pct: r_pct.get(),
        tail_mrrmse: mrr.get(),
        mrmse: state.get().unwrap_or(f64::NAN),
        final_q: last.0,
        final_r: last.1,
        wall_clock_seconds: 0.0,
    })
}

fn run_localized(plan: LetkfPlan, out: &Path) -> Result<RunSummary> {
    let LetkfPlan { setup, mut filter } = plan;
    let mut wtr = csv::Writer::from_path(out.join("diagnostics.csv"))?;
    wtr.write_record(["cycle", "mrmse", "q1", "q2", "r", "regions_skipped"])?;
    let burn_in = setup.cycles / 10;
    let (mut running, mut tail, mut r_pct) = (TailMean::new(), TailMean::new(), TailMean::new());
    run_letkf(&setup, &mut filter, |rec| {
        running.push(Some(rec.analysis_rmse));
        if rec.cycle > burn_in {
            tail.push(Some(rec.analysis_rmse));
            r_pct.push(Some(100.0 * (rec.r - setup.r_true).abs() / setup.r_true));
        }
        wtr.write_record([
            rec.cycle.to_string(),
            num(running.get().unwrap_or(f64::NAN)),
            num(rec.q1),
            num(rec.q2),
            num(rec.r),
            rec.regions_skipped.to_string(),
        ])?;
        Ok(())
    })?;
    wtr.flush()?;
    let n = setup.model.n;
    Ok(RunSummary {
        cycles: setup.cycles,
        underdetermined_rows: 0,
        pseudo_inverse_rows: 0,
        tail_q_err_pct: None,
        tail_r_err_pct: r_pct.get(),
        tail_mrrmse: None,
        mrmse: tail.get().unwrap_or(f64::NAN),
        final_q: filter.global_q(),
        final_r: filter.r.matrix(n),
        wall_clock_seconds: 0.0,
    })
}

/// One cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub index: usize,
    /// `(key, value)` for every swept axis.
    pub assignment: Assignment,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

/// `(key, value)` pairs fixed by one sweep cell.
pub type Assignment = Vec<(String, String)>;

/// Every combination of the `sweep.` axes, first axis slowest.
pub fn expand_grid(raw: &RawConfig) -> Result<Vec<(Assignment, RawConfig)>> {
    let axes = raw.sweep_axes()?;
    let base = raw.without_sweep();
    let mut cells: Vec<Assignment> = vec![Vec::new()];
    for (key, values) in &axes {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    Ok(cells
        .into_iter()
        .map(|assignment| {
            let mut cfg = base.clone();
            for (k, v) in &assignment {
                cfg.set(k, v);
            }
            (assignment, cfg)
        })
        .collect())
}

fn cell_dir_name(index: usize, assignment: &[(String, String)]) -> String {
    let mut name = format!("cell-{index:03}");
    for (k, v) in assignment {
        let short = k.rsplit('.').next().unwrap_or(k);
        name.push_str(&format!("_{short}-{v}"));
    }
    name
}

/// Runs every cell in parallel, one sub-directory each, and writes
/// `sweep.csv` indexing the cells.
pub fn sweep(raw: &RawConfig, out: &Path) -> Result<Vec<SweepCell>> {
    let grid = expand_grid(raw)?;
    // validate everything before starting any work
    let configs: Vec<(usize, Assignment, ExperimentConfig)> = grid
        .into_iter()
        .enumerate()
        .map(|(i, (a, r))| ExperimentConfig::from_raw(&r).map(|c| (i, a, c)))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out)?;
    let cells: Vec<SweepCell> = configs
        .into_par_iter()
        .map(|(index, assignment, cfg)| {
            let dir = out.join(cell_dir_name(index, &assignment));
            let summary = run(&cfg, &dir)?;
            Ok(SweepCell {
                index,
                assignment,
                dir,
                summary,
            })
        })
        .collect::<Result<_>>()?;

    let mut wtr = csv::Writer::from_path(out.join("sweep.csv"))?;
    let mut header = vec!["cell".to_string(), "dir".to_string()];
    if let Some(first) = cells.first() {
        header.extend(first.assignment.iter().map(|(k, _)| k.clone()));
    }
    header.extend(["q_err_pct", "r_err_pct", "mrmse", "underdetermined_rows"].map(String::from));
    wtr.write_record(&header)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, num);
    for c in &cells {
        let mut row = vec![
            c.index.to_string(),
            c.dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        ];
        row.extend(c.assignment.iter().map(|(_, v)| v.clone()));
        row.push(opt(c.summary.tail_q_err_pct));
        row.push(opt(c.summary.tail_r_err_pct));
        row.push(num(c.summary.mrmse));
        row.push(c.summary.underdetermined_rows.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(cells)
}

/// Writes the truth at every integration step (`truth.csv`) and the
/// observations (`observations.csv`) for `steps` observation cycles after
/// the spin-up.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let (model, scheme) = cfg.build_model()?;
    let dynamics = model.dynamics();
    let mut truth = TruthStream::new(dynamics, &scheme, dynamics.initial_state(), cfg.seed);
    for _ in 0..cfg.spinup {
        truth.advance();
    }
    let n = dynamics.state_dim();
    let m = scheme.obs_dim();
    let mut xw = csv::Writer::from_path(out.join("truth.csv"))?;
    let mut yw = csv::Writer::from_path(out.join("observations.csv"))?;
    let header = |prefix: &str, d: usize| {
        std::iter::once("step".to_string())
            .chain((1..=d).map(|i| format!("{prefix}_{i}")))
            .collect::<Vec<_>>()
    };
    xw.write_record(header("x", n))?;
    yw.write_record(header("y", m))?;
    let row = |step: usize, v: &nalgebra::DVector<f64>| {
        std::iter::once(step.to_string())
            .chain(v.iter().map(|x| num(*x)))
            .collect::<Vec<_>>()
    };
    xw.write_record(row(0, truth.state()))?;
    for step in 1..=cfg.steps * scheme.every {
        truth.advance();
        xw.write_record(row(step, truth.state()))?;
        if step % scheme.every == 0 {
            yw.write_record(row(step, &truth.observe()))?;
        }
    }
    xw.flush()?;
    yw.flush()?;
    let mut manifest = File::create(out.join("manifest.txt"))?;
    manifest.write_all(cfg.to_raw().to_text().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_in_row_major_order() {
        let raw = RawConfig::parse("model = linear\nsweep.steps = 1, 2\nsweep.seed = 5, 6, 7\n").unwrap();
        let grid = expand_grid(&raw).unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(
            grid[1].0,
            vec![
                ("steps".to_string(), "1".to_string()),
                ("seed".to_string(), "6".to_string())
            ]
        );
        assert_eq!(grid[3].1.value("steps"), Some("2"));
        assert!(grid[0].1.get("sweep.steps").is_none());
    }

    #[test]
    fn no_axes_is_one_cell() {
        let raw = RawConfig::parse("model = linear\n").unwrap();
        assert_eq!(expand_grid(&raw).unwrap().len(), 1);
    }

    #[test]
    fn cell_names_are_readable() {
        let a = vec![
            ("model.every".to_string(), "3".to_string()),
            ("model.ratio".to_string(), "0.5".to_string()),
        ];
        assert_eq!(cell_dir_name(7, &a), "cell-007_every-3_ratio-0.5");
    }
}
