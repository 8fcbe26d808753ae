//! Running configs: seed fan-out, artifact layout, sweeps and re-verification.
//!
//! An experiment directory holds
//!
//! - `config.toml`, a verbatim copy of the config that produced it;
//! - `seed_<s>.csv` per seed (`step, return, cost, lr, lambda`);
//! - `curves.csv`, the cross-seed mean/min/max of each column;
//! - `summary.json` with final-window statistics and wall-clock times;
//! - for testbed runs, `record_seed_<s>.json` (the full iterate record) and
//!   `certificate_seed_<s>.json`.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use apd_core::certificate::{feasibility_check, verify_bounds, BoundCertificate};
use apd_core::solver::{apd_run, papd_run, RunRecord};
use apd_core::testbed::ConstrainedProgram;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_seeds, final_window, mean_std, write_curves, WindowStats};
use crate::config::{ExperimentConfig, Problem, SweepParam, Task};
use crate::error::{HarnessError, Result};
use crate::records::{seed_rows, write_rows_file, SeedRow};

const FEASIBILITY_TOL: f64 = 1e-2;

pub struct SeedOutcome {
    pub seed: u64,
    pub record: RunRecord,
    pub rows: Vec<SeedRow>,
    pub window: WindowStats,
    pub certificate: Option<BoundCertificate>,
    pub feasible_on_average: bool,
    pub seconds: f64,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let problem = cfg.problem()?;
    let solver = cfg.solver_config(&problem, seed)?;
    let start = Instant::now();
    let (record, spec) = match &problem {
        Problem::Testbed(p) => (apd_run(p, &solver)?, p.constraint()),
        Problem::Cmdp(env, spec) => (papd_run(env.as_ref(), spec, &solver)?, spec.clone()),
    };
    let seconds = start.elapsed().as_secs_f64();
    let certificate = match &problem {
        Problem::Testbed(p) => Some(verify_bounds(&record, p, &p.constants(), cfg.zeta())?),
        Problem::Cmdp(..) => None,
    };
    let feasible_on_average = feasibility_check(&record, &spec, cfg.final_window, FEASIBILITY_TOL)?.passed;
    let rows = seed_rows(&record)?;
    Ok(SeedOutcome {
        seed,
        window: final_window(&rows, cfg.final_window),
        record,
        rows,
        certificate,
        feasible_on_average,
        seconds,
    })
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Runtime(e.to_string()))
}

/// Runs every seed of `cfg` on up to `cfg.workers` threads; results keep seed order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    pool(cfg.workers)?.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_window_return: f64,
    pub final_window_cost: f64,
    pub final_window_lambda: f64,
    pub final_lambda: Vec<f64>,
    pub feasible_on_average: bool,
    pub certificate_passed: Option<bool>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub task: Task,
    pub algorithm: crate::config::Algorithm,
    pub iterations: usize,
    pub final_window: f64,
    pub final_window_return: MeanStd,
    pub final_window_cost: MeanStd,
    pub seeds: Vec<SeedSummary>,
}

pub fn summarize(cfg: &ExperimentConfig, outcomes: &[SeedOutcome]) -> ExperimentSummary {
    let rets: Vec<f64> = outcomes.iter().map(|o| o.window.ret).collect();
    let costs: Vec<f64> = outcomes.iter().map(|o| o.window.cost).collect();
    ExperimentSummary {
        task: cfg.task,
        algorithm: cfg.algorithm,
        iterations: cfg.iterations,
        final_window: cfg.final_window,
        final_window_return: MeanStd::of(&rets),
        final_window_cost: MeanStd::of(&costs),
        seeds: outcomes
            .iter()
            .map(|o| SeedSummary {
                seed: o.seed,
                final_window_return: o.window.ret,
                final_window_cost: o.window.cost,
                final_window_lambda: o.window.lambda,
                final_lambda: o.record.final_lambda.clone(),
                feasible_on_average: o.feasible_on_average,
                certificate_passed: o.certificate.as_ref().map(|c| c.passed),
                wall_clock_seconds: o.seconds,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub seed_csvs: Vec<PathBuf>,
    pub curves: PathBuf,
    pub summary: PathBuf,
    pub certificates: Vec<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    raw_config: &str,
    outcomes: &[SeedOutcome],
) -> Result<Artifacts> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, raw_config).map_err(|e| HarnessError::io(&cfg_path, e))?;
    let mut seed_csvs = Vec::new();
    let mut certificates = Vec::new();
    for o in outcomes {
        let path = dir.join(format!("seed_{}.csv", o.seed));
        write_rows_file(&path, &o.rows)?;
        seed_csvs.push(path);
        if let Some(cert) = &o.certificate {
            write_json(&dir.join(format!("record_seed_{}.json", o.seed)), &o.record)?;
            let path = dir.join(format!("certificate_seed_{}.json", o.seed));
            write_json(&path, cert)?;
            certificates.push(path);
        }
    }
    let runs: Vec<Vec<SeedRow>> = outcomes.iter().map(|o| o.rows.clone()).collect();
    let curves = dir.join("curves.csv");
    write_curves(&curves, &aggregate_seeds(&runs)?)?;
    let summary = dir.join("summary.json");
    write_json(&summary, &summarize(cfg, outcomes))?;
    Ok(Artifacts {
        dir: dir.to_path_buf(),
        seed_csvs,
        curves,
        summary,
        certificates,
    })
}

pub fn run_experiment(config_path: &Path) -> Result<Artifacts> {
    let (cfg, raw) = ExperimentConfig::load(config_path)?;
    let outcomes = run_seeds(&cfg)?;
    let dir = cfg.resolved_output_dir();
    write_artifacts(&dir, &cfg, &raw, &outcomes)
}

/// `param=f1,f2,...`: multiplicative factors applied to one schedule parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub param: SweepParam,
    pub factors: Vec<f64>,
}

impl FromStr for GridSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| HarnessError::Config(format!("grid `{s}`: {m}"));
        let (name, values) = s.split_once('=').ok_or_else(|| bad("expected param=f1,f2,...".into()))?;
        let param = match name.trim() {
            "lr" => SweepParam::Lr,
            "h1" => SweepParam::H1,
            "h2" => SweepParam::H2,
            other => return Err(bad(format!("unknown parameter `{other}` (lr, h1, h2)"))),
        };
        let factors = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| *f > 0.0 && f.is_finite())
                    .ok_or_else(|| bad(format!("`{v}` is not a positive factor")))
            })
            .collect::<Result<Vec<_>>>()?;
        if factors.is_empty() {
            return Err(bad("grid is empty".into()));
        }
        Ok(Self { param, factors })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub factor: f64,
    pub value: f64,
    pub return_mean: f64,
    pub return_std: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
}

/// Runs every grid cell over every seed and returns one row per cell.
pub fn sweep_outcomes(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<Vec<(ExperimentConfig, Vec<SeedOutcome>)>> {
    let cells = grid
        .factors
        .iter()
        .map(|f| {
            let mut c = cfg.clone();
            c.schedule = cfg.schedule.scaled(grid.param, *f)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(usize, SeedOutcome)> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(i, s)| run_seed(&cells[i], s).map(|o| (i, o)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut grouped: Vec<(ExperimentConfig, Vec<SeedOutcome>)> = cells.into_iter().map(|c| (c, Vec::new())).collect();
    for (i, o) in results {
        grouped[i].1.push(o);
    }
    Ok(grouped)
}

pub fn sweep_row(grid: &GridSpec, factor: f64, cell: &ExperimentConfig, outcomes: &[SeedOutcome]) -> SweepRow {
    let rets: Vec<f64> = outcomes.iter().map(|o| o.window.ret).collect();
    let costs: Vec<f64> = outcomes.iter().map(|o| o.window.cost).collect();
    let (return_mean, return_std) = mean_std(&rets);
    let (cost_mean, cost_std) = mean_std(&costs);
    SweepRow {
        param: grid.param.name().to_string(),
        factor,
        value: cell.schedule.value(grid.param).unwrap_or(f64::NAN),
        return_mean,
        return_std,
        cost_mean,
        cost_std,
    }
}

pub fn run_sweep(config_path: &Path, grid: &GridSpec) -> Result<(PathBuf, Vec<SweepRow>)> {
    let (cfg, raw) = ExperimentConfig::load(config_path)?;
    let root = cfg.resolved_output_dir();
    let mut rows = Vec::new();
    for (i, (cell, outcomes)) in sweep_outcomes(&cfg, grid)?.into_iter().enumerate() {
        let factor = grid.factors[i];
        let dir = root.join(format!("cell_{i:02}_{}_x{factor}", grid.param.name()));
        write_artifacts(&dir, &cell, &raw, &outcomes)?;
        rows.push(sweep_row(grid, factor, &cell, &outcomes));
    }
    std::fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
    let path = root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok((path, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub flagged_iterations: usize,
}

/// Re-runs the bound certificates of every `record_seed_<s>.json` in `dir`
/// against the problem in its `config.toml`.
pub fn verify_dir(dir: &Path) -> Result<Vec<VerifyReport>> {
    let config = dir.join("config.toml");
    if !config.is_file() {
        return Err(HarnessError::Runtime(format!("{} is not a run directory", dir.display())));
    }
    let (cfg, _) = ExperimentConfig::load(&config)?;
    let prog = match cfg.problem()? {
        Problem::Testbed(p) => p,
        Problem::Cmdp(..) => {
            return Err(HarnessError::Config(
                "bound certificates need exact oracles; only testbed runs can be verified".into(),
            ))
        }
    };
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let record: RunRecord = read_json(&dir.join(format!("record_seed_{seed}.json")))?;
        let cert = verify_bounds(&record, &prog, &prog.constants(), cfg.zeta())?;
        write_json(&dir.join(format!("certificate_seed_{seed}.json")), &cert)?;
        reports.push(VerifyReport {
            seed,
            passed: cert.passed,
            flagged_iterations: cert.flagged_iterations,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: GridSpec = "h1=0.2,0.32,0.4,1,1.6,2.4,3.2,4.0".parse().unwrap();
        assert_eq!(g.param, SweepParam::H1);
        assert_eq!(g.factors.len(), 8);
        assert!("h3=1".parse::<GridSpec>().is_err());
        assert!("h1=".parse::<GridSpec>().is_err());
        assert!("h1=0,1".parse::<GridSpec>().is_err());
        assert!("lr".parse::<GridSpec>().is_err());
    }
}
