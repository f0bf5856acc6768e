use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enkf_qr::harness::{self, apply_scale, preset, BenchConfig, ExperimentConfig, RawConfig};
use enkf_qr::Error;

/// Adaptive Q/R estimation experiments.
#[derive(Parser, Debug)]
#[command(name = "enkf-qr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the truth trajectory and its observations.
    Simulate(Common),
    /// Run one filter/estimator experiment.
    Run(Common),
    /// Run every cell of the `sweep.*` grid.
    Sweep(Common),
    /// Time the MBL and OBL estimator steps against the observation count.
    Bench(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file of `key = value` lines; overrides the preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named starting configuration.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Divide the number of steps by K.
    #[arg(long, value_name = "K")]
    scale: Option<usize>,
}

fn load(args: &Common) -> Result<RawConfig, Error> {
    let mut raw = match &args.preset {
        Some(name) => preset(name)?,
        None => RawConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        raw.merge(&RawConfig::parse(&text)?);
    }
    if let Some(seed) = args.seed {
        raw.set("seed", seed);
    }
    if let Some(k) = args.scale {
        apply_scale(&mut raw, k)?;
    }
    Ok(raw)
}

fn print_summary(dir: &Path, s: &harness::RunSummary) {
    let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| format!("{x:.4}"));
    println!(
        "{}: {} cycles, mrmse {:.4}, Q err {}%, R err {}%, underdetermined {}",
        dir.display(),
        s.cycles,
        s.mrmse,
        opt(s.tail_q_err_pct),
        opt(s.tail_r_err_pct),
        s.underdetermined_rows
    );
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = ExperimentConfig::from_raw(&load(&args)?.without_sweep())?;
            harness::simulate(&cfg, &args.out)?;
            println!("wrote {}", args.out.join("truth.csv").display());
        }
        Command::Run(args) => {
            let cfg = ExperimentConfig::from_raw(&load(&args)?)?;
            let summary = harness::run(&cfg, &args.out)?;
            print_summary(&args.out, &summary);
        }
        Command::Sweep(args) => {
            let cells = harness::sweep(&load(&args)?, &args.out)?;
            for c in &cells {
                print_summary(&c.dir, &c.summary);
            }
            println!("wrote {}", args.out.join("sweep.csv").display());
        }
        Command::Bench(args) => {
            // presets and scale have no meaning for the timing run
            if args.preset.is_some() || args.scale.is_some() || args.seed.is_some() {
                return Err(Error::InvalidInput("bench takes --config and --out only".into()));
            }
            let raw = match &args.config {
                Some(path) => RawConfig::parse(
                    &fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
                )?,
                None => RawConfig::default(),
            };
            let bc = BenchConfig::from_raw(&raw)?;
            let table = harness::bench_complexity(&bc.m_list, bc.np, bc.lags, bc.reps)?;
            fs::create_dir_all(&args.out)?;
            let csv = table.to_csv()?;
            fs::write(args.out.join("bench.csv"), &csv)?;
            print!("{csv}");
            println!("mbl slope {:.3}, obl slope {:.3}", table.mbl_slope, table.obl_slope);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
