//! Per-seed learning curves as CSV with the fixed column order
//! `step, return, cost, lr, lambda`.

use std::io::{Read, Write};
use std::path::Path;

use apd_core::solver::RunRecord;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const COLUMNS: [&str; 5] = ["step", "return", "cost", "lr", "lambda"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub step: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub cost: f64,
    pub lr: f64,
    pub lambda: f64,
}

/// Curve rows of a single-constraint record.
pub fn seed_rows(record: &RunRecord) -> Result<Vec<SeedRow>> {
    record
        .rows
        .iter()
        .map(|r| match (r.j_c.as_slice(), r.lambda.as_slice()) {
            ([cost], [lambda]) => Ok(SeedRow {
                step: r.k,
                ret: r.j_r,
                cost: *cost,
                lr: r.eta,
                lambda: *lambda,
            }),
            _ => Err(HarnessError::Runtime(format!(
                "curve CSVs hold one constraint, record has {}",
                r.j_c.len()
            ))),
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[SeedRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::Runtime(e.to_string()))?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<SeedRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(HarnessError::Runtime(format!(
            "unexpected CSV header {:?}, expected {COLUMNS:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

pub fn write_rows_file(path: &Path, rows: &[SeedRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_rows(std::io::BufWriter::new(file), rows)
}

pub fn read_rows_file(path: &Path) -> Result<Vec<SeedRow>> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_rows(std::io::BufReader::new(file))
}
