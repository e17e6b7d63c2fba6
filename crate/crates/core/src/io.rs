//! Flat-file formats: operator and target JSON, potential and eigenvector CSV.
//!
//! Floats are written with 17 significant digits so that values read back
//! are bit-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::embedder::{EmbedTarget, Potential};
use crate::jacobi::PeriodicJacobiOperator;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, message: impl ToString) -> IoError {
    IoError::Parse { path: path.to_path_buf(), message: message.to_string() }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn read_operator(path: &Path) -> Result<PeriodicJacobiOperator, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn read_targets(path: &Path) -> Result<Vec<EmbedTarget>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let targets: Vec<EmbedTarget> = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    if targets.is_empty() {
        return Err(parse_err(path, "target list is empty"));
    }
    Ok(targets)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    w.write_record(header).map_err(|e| parse_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| parse_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, f64)>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    let found = r.headers().map_err(|e| parse_err(path, e))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(parse_err(path, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let bad = |what: &str| parse_err(path, format!("row {}: bad {what}", line + 2));
        if rec.len() != 2 {
            return Err(bad("column count"));
        }
        let n: usize = rec[0].trim().parse().map_err(|_| bad(header[0]))?;
        let v: f64 = rec[1].trim().parse().map_err(|_| bad(header[1]))?;
        if !v.is_finite() {
            return Err(bad(header[1]));
        }
        out.push((n, v));
    }
    Ok(out)
}

/// `n,q_n` for every nonzero site.
pub fn write_potential_csv(path: &Path, potential: &Potential) -> Result<(), IoError> {
    let rows = potential.entries().iter().map(|&(n, v)| vec![n.to_string(), fmt_f64(v)]);
    write_rows(path, &["n", "q_n"], rows)
}

pub fn read_potential_csv(path: &Path, period: usize) -> Result<Potential, IoError> {
    let rows = read_rows(path, &["n", "q_n"])?;
    if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(parse_err(path, "sites must be strictly increasing"));
    }
    Ok(Potential::from_entries(period, rows))
}

/// `n,u_n` for `n = 0, 1, ...`.
pub fn write_eigenvector_csv(path: &Path, u: &[f64]) -> Result<(), IoError> {
    let rows = u.iter().enumerate().map(|(n, &v)| vec![n.to_string(), fmt_f64(v)]);
    write_rows(path, &["n", "u_n"], rows)
}

pub fn read_eigenvector_csv(path: &Path) -> Result<Vec<f64>, IoError> {
    let rows = read_rows(path, &["n", "u_n"])?;
    for (i, &(n, _)) in rows.iter().enumerate() {
        if n != i {
            return Err(parse_err(path, format!("row {}: expected n = {i}", i + 2)));
        }
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

/// `lambda,trace,class` table.
pub fn write_bands_csv(path: &Path, rows: &[(f64, f64, &str)]) -> Result<(), IoError> {
    let rows = rows.iter().map(|&(l, t, c)| vec![fmt_f64(l), fmt_f64(t), c.to_string()]);
    write_rows(path, &["lambda", "trace", "class"], rows)
}
