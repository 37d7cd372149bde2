//! Dataset CSV files and their JSON manifests.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelSpec;
use super::HarnessError;
use crate::family::Family;

/// Shortest form for integer-valued families, otherwise 17 significant
/// digits, which round-trips every finite f64.
pub fn format_value(value: f64, integer: bool) -> String {
    if integer {
        format!("{}", value as i64)
    } else {
        format!("{value:.16e}")
    }
}

pub fn column_names(dim: usize) -> Vec<String> {
    (0..dim).map(|d| format!("x{d}")).collect()
}

pub fn write_dataset(path: &Path, family: &Family, data: &[Vec<f64>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    w.write_record(column_names(family.data_dim()))
        .map_err(|e| HarnessError::io(path, e))?;
    let integer = family.is_discrete();
    for row in data {
        w.write_record(row.iter().map(|&v| format_value(v, integer)))
            .map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a header-bearing CSV of numbers. A missing file is a user error.
pub fn read_dataset(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let file = File::open(path)
        .map_err(|e| HarnessError::config(format!("cannot open dataset {}: {e}", path.display())))?;
    let mut reader = csv::Reader::from_reader(file);
    let width = reader
        .headers()
        .map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?
        .len();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
        if record.len() != width {
            return Err(HarnessError::config(format!(
                "{} row {}: expected {width} fields, got {}",
                path.display(),
                i + 1,
                record.len()
            )));
        }
        let row = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    HarnessError::config(format!("{} row {}: '{field}' is not a number", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Sidecar written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub n: usize,
    pub rng_algorithm: String,
    pub prior_family: String,
    pub noise_family: String,
    pub columns: Vec<String>,
    pub ground_truth: ModelSpec,
    pub tool_version: String,
}
