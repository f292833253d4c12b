//! CSV and JSON writers shared by the commands.
//!
//! Floats are written with 17 significant digits, which parse back to the
//! same `f64`, so a read-write cycle reproduces a file byte for byte.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::HarnessError;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A table assembled in memory and written in one go.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        w.write_record(&self.header).map_err(|e| HarnessError::csv(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| HarnessError::csv(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        let header = r.headers().map_err(|e| HarnessError::csv(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(|e| HarnessError::csv(path, e))?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }

    /// Column index by name, or the schema error naming it.
    pub fn column(&self, name: &str, path: &Path) -> Result<usize, HarnessError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| HarnessError::Schema {
            path: path.to_path_buf(),
            message: format!("missing column `{name}`"),
        })
    }

    pub fn f64_column(&self, name: &str, path: &Path) -> Result<Vec<f64>, HarnessError> {
        let c = self.column(name, path)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row[c].parse::<f64>().map_err(|_| HarnessError::Schema {
                    path: path.to_path_buf(),
                    message: format!("column `{name}`, row {}: `{}` is not a number", i + 1, row[c]),
                })
            })
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// `<file>.meta.json` next to `file`.
pub fn sidecar_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().expect("output files have names").to_os_string();
    name.push(".meta.json");
    file.with_file_name(name)
}
