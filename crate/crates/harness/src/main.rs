use std::path::PathBuf;
use std::process::ExitCode;

use apd_harness::aggregate::aggregate_dir;
use apd_harness::experiment::{run_experiment, run_sweep, verify_dir, GridSpec};
use apd_harness::{HarnessError, Result};
use clap::{Parser, Subcommand};

/// Adaptive primal-dual experiments for constrained MDPs
#[derive(Parser, Debug)]
#[command(name = "apd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every seed of a config and write its artifacts
    Run { config: PathBuf },
    /// Scale one schedule parameter over a grid of factors, e.g. --grid h1=0.2,0.4,1,2
    Sweep {
        config: PathBuf,
        #[arg(long)]
        grid: String,
    },
    /// Re-run the bound certificates of a testbed run directory
    Verify { dir: PathBuf },
    /// Recompute curves.csv from the seed CSVs in a directory
    Aggregate { dir: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let a = run_experiment(&config)?;
            for p in a.seed_csvs.iter().chain(&a.certificates).chain([&a.curves, &a.summary]) {
                println!("{}", p.display());
            }
        }
        Command::Sweep { config, grid } => {
            let grid: GridSpec = grid.parse()?;
            let (path, rows) = run_sweep(&config, &grid)?;
            for r in &rows {
                println!(
                    "{}={:<10} return {:>10.4} ± {:<8.4} cost {:>9.4} ± {:.4}",
                    r.param, r.value, r.return_mean, r.return_std, r.cost_mean, r.cost_std
                );
            }
            println!("{}", path.display());
        }
        Command::Verify { dir } => {
            let reports = verify_dir(&dir)?;
            let mut ok = true;
            for r in &reports {
                println!(
                    "seed {}: {} ({} flagged iterations)",
                    r.seed,
                    if r.passed { "pass" } else { "FAIL" },
                    r.flagged_iterations
                );
                ok &= r.passed;
            }
            if !ok {
                return Err(HarnessError::Runtime("certificate failed".into()));
            }
        }
        Command::Aggregate { dir } => {
            let (stats, path) = aggregate_dir(&dir)?;
            println!("{} seeds, {} steps -> {}", stats.seeds, stats.points.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("apd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
