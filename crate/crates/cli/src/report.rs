//! Report rows and a strict CSV reader for them. The column set is part of
//! the CLI contract; readers reject files whose header drifts.

use std::path::Path;

use flowmatch::{Error, Result};
use serde::{Deserialize, Serialize};

pub const REPORT_COLUMNS: [&str; 11] = [
    "run_id", "algorithm", "dataset", "sigma", "seed", "w2_sq", "pe", "npe", "nfe_mean",
    "integrator", "n_steps",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub algorithm: String,
    pub dataset: String,
    pub sigma: f64,
    pub seed: u64,
    pub w2_sq: f64,
    pub pe: f64,
    pub npe: f64,
    pub nfe_mean: f64,
    pub integrator: String,
    /// empty for adaptive integrators
    pub n_steps: Option<usize>,
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers: Vec<&str> = r.headers()?.iter().collect();
    if headers != REPORT_COLUMNS {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: format!("report header mismatch: {headers:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
