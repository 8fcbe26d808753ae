//! Cross-seed curve statistics and final-window summaries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::records::{read_rows_file, SeedRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Band {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let min = values.clone().fold(f64::INFINITY, f64::min);
        let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
        // rounding in the sum can push the mean of equal values just outside
        let mean = (values.sum::<f64>() / n).clamp(min, max);
        Self { mean, min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub ret: Band,
    pub cost: Band,
    pub lr: Band,
    pub lambda: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStats {
    pub seeds: usize,
    pub points: Vec<CurvePoint>,
}

pub fn aggregate_seeds(runs: &[Vec<SeedRow>]) -> Result<CurveStats> {
    let first = runs
        .first()
        .ok_or_else(|| HarnessError::Runtime("no runs to aggregate".into()))?;
    if let Some(bad) = runs.iter().find(|r| r.len() != first.len()) {
        return Err(HarnessError::Runtime(format!(
            "runs differ in length: {} vs {}",
            first.len(),
            bad.len()
        )));
    }
    let points = (0..first.len())
        .map(|i| {
            let col = move |f: fn(&SeedRow) -> f64| runs.iter().map(move |r| f(&r[i]));
            CurvePoint {
                step: first[i].step,
                ret: Band::of(col(|r| r.ret)),
                cost: Band::of(col(|r| r.cost)),
                lr: Band::of(col(|r| r.lr)),
                lambda: Band::of(col(|r| r.lambda)),
            }
        })
        .collect();
    Ok(CurveStats {
        seeds: runs.len(),
        points,
    })
}

pub fn write_curves(path: &Path, stats: &CurveStats) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "return_mean",
        "return_min",
        "return_max",
        "cost_mean",
        "cost_min",
        "cost_max",
        "lr_mean",
        "lr_min",
        "lr_max",
        "lambda_mean",
        "lambda_min",
        "lambda_max",
    ])?;
    for p in &stats.points {
        let mut rec = vec![p.step.to_string()];
        for b in [p.ret, p.cost, p.lr, p.lambda] {
            rec.extend([b.mean, b.min, b.max].map(|v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Mean return and cost over the trailing `fraction` of a curve (at least one row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub ret: f64,
    pub cost: f64,
    pub lambda: f64,
}

pub fn final_window(rows: &[SeedRow], fraction: f64) -> WindowStats {
    let n = ((fraction * rows.len() as f64).ceil() as usize).clamp(1, rows.len().max(1));
    let tail = &rows[rows.len().saturating_sub(n)..];
    let mean = |f: fn(&SeedRow) -> f64| tail.iter().map(f).sum::<f64>() / tail.len() as f64;
    WindowStats {
        ret: mean(|r| r.ret),
        cost: mean(|r| r.cost),
        lambda: mean(|r| r.lambda),
    }
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `seed_<s>.csv` files in `dir`, ordered by seed.
pub fn seed_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let seed = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("seed_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<u64>().ok());
        if let Some(seed) = seed {
            files.push((seed, path));
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Runtime(format!("no seed_<s>.csv files in {}", dir.display())));
    }
    Ok(files)
}

/// Aggregates every seed CSV in `dir` and writes `curves.csv` next to them.
pub fn aggregate_dir(dir: &Path) -> Result<(CurveStats, PathBuf)> {
    let runs = seed_files(dir)?
        .iter()
        .map(|(_, p)| read_rows_file(p))
        .collect::<Result<Vec<_>>>()?;
    let stats = aggregate_seeds(&runs)?;
    let out = dir.join("curves.csv");
    write_curves(&out, &stats)?;
    Ok((stats, out))
}
