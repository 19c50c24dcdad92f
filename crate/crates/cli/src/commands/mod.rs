pub mod cotrain;
pub mod evaluate;
pub mod fairness;
pub mod featurize;
pub mod ingest;
pub mod measure;
pub mod review;

use std::path::Path;

use vidcurate_core::corpus::Dimension;

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Comma-separated table with a header row and `\n` line ends.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".into(), num)
}

pub fn dimensions(only: Option<Dimension>) -> Vec<Dimension> {
    only.map_or_else(|| Dimension::ALL.to_vec(), |d| vec![d])
}

/// One status line per step on stdout.
pub fn report(step: &str, fields: &[(&str, String)]) {
    let mut line = format!("step={step}");
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    println!("{line}");
}
