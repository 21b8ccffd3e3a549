//! File formats.
//!
//! Matrices are headerless CSV, one row per line, written with 17
//! significant digits so every `f64` survives a round trip. Factor stacks
//! are stored one slice per file (`W_m{index}.csv`, `H_l{index}.csv`) next
//! to a `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{FactorStackH, FactorStackW};
use crate::simulation::EnsembleStats;
use crate::solver::ConvergenceTrace;

pub const MANIFEST_FILE: &str = "manifest.json";

/// `{:.16e}`: one leading digit and sixteen after the point.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        col,
        msg: msg.into(),
    }
}

/// Reads a matrix; lines and columns in errors are 1-based.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            parse_err(path, line, 0, e.to_string())
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("not a number: {field:?}")))?;
            if !value.is_finite() {
                return Err(parse_err(path, line, c + 1, format!("non-finite value {field:?}")));
            }
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line,
                    row.len().min(first.len()) + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, 1, "empty matrix"));
    }
    Matrix::from_rows(&rows)
}

/// Reads a matrix and rejects negative entries, naming the offending cell.
pub fn read_nonnegative_csv(path: &Path) -> Result<Matrix> {
    let m = read_matrix_csv(path)?;
    m.check_nonnegative().map_err(|e| match e {
        Error::NegativeEntry { row, col, value } => {
            parse_err(path, row + 1, col + 1, format!("negative entry {value}"))
        }
        other => other,
    })?;
    Ok(m)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::with_capacity(m.rows() * m.cols() * 24);
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn weight_slice_path(dir: &Path, m: usize) -> PathBuf {
    dir.join(format!("W_m{m}.csv"))
}

pub fn activation_slice_path(dir: &Path, l: usize) -> PathBuf {
    dir.join(format!("H_l{l}.csv"))
}

pub fn save_factors(dir: &Path, w: &FactorStackW, h: &FactorStackH) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (m, s) in w.slices().iter().enumerate() {
        write_matrix_csv(&weight_slice_path(dir, m), s)?;
    }
    for (l, s) in h.slices().iter().enumerate() {
        write_matrix_csv(&activation_slice_path(dir, l), s)?;
    }
    Ok(())
}

fn count_slices(dir: &Path, path_of: fn(&Path, usize) -> PathBuf) -> usize {
    (0..).take_while(|&i| path_of(dir, i).is_file()).count()
}

/// Loads a factor directory. Slice counts come from the manifest when one
/// is present, otherwise from the consecutive slice files found.
pub fn load_factors(dir: &Path) -> Result<(FactorStackW, FactorStackH)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let (m_count, l_count) = if manifest_path.is_file() {
        let manifest = read_manifest(&manifest_path)?;
        (manifest.m, manifest.l)
    } else {
        (count_slices(dir, weight_slice_path), count_slices(dir, activation_slice_path))
    };
    let w = (0..m_count)
        .map(|m| read_nonnegative_csv(&weight_slice_path(dir, m)))
        .collect::<Result<Vec<_>>>()?;
    let h = (0..l_count)
        .map(|l| read_nonnegative_csv(&activation_slice_path(dir, l)))
        .collect::<Result<Vec<_>>>()?;
    Ok((FactorStackW::new(w)?, FactorStackH::new(h)?))
}

/// Self-description written next to every artifact directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
    pub floor: f64,
    pub normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub legacy: bool,
    pub prng: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_early: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_matrices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_inits: Option<usize>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// `iter,cost` with iterations numbered from 1.
pub fn write_trace_csv(path: &Path, trace: &ConvergenceTrace) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "iter,cost").map_err(io_err(path))?;
    for (t, c) in trace.costs.iter().enumerate() {
        writeln!(out, "{},{}", t + 1, format_f64(*c)).map_err(io_err(path))?;
    }
    fs::write(path, out).map_err(io_err(path))
}

/// `iter,mean,std` with iterations numbered from 1.
pub fn write_curves_csv(path: &Path, stats: &EnsembleStats) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "iter,mean,std").map_err(io_err(path))?;
    for (t, (m, s)) in stats.mean.iter().zip(&stats.std).enumerate() {
        writeln!(out, "{},{},{}", t + 1, format_f64(*m), format_f64(*s)).map_err(io_err(path))?;
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads back a headed numeric CSV such as a trace or curves file.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, 0, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, idx + 2, 0, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse().map_err(|_| parse_err(path, idx + 2, c + 1, format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
