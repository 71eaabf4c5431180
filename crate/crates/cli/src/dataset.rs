//! Dataset ingestion.
//!
//! Two formats:
//!
//! * CSV: comma-separated decimals, one point per line, optional header line.
//! * Binary: magic `ADEV`, `u64` n, `u64` d, then `n * d` little-endian f64, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use ade_core::Points;

use crate::error::{CliError, CliResult};

pub const BINARY_MAGIC: &[u8; 4] = b"ADEV";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub points: Points,
    /// Number of rows; may be 0 only for query files.
    pub n: usize,
    pub d: usize,
    pub source: PathBuf,
    pub format: Format,
}

impl Dataset {
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.rows().take(self.n)
    }
}

fn ingest(path: &Path, row: usize, reason: impl Into<String>) -> CliError {
    CliError::Ingest {
        path: path.to_path_buf(),
        row,
        reason: reason.into(),
    }
}

/// Reads a dataset. `allow_empty` admits zero rows (query batches); an empty
/// CSV then needs `expected_dim` to know its width.
pub fn read_dataset(
    path: &Path,
    allow_empty: bool,
    expected_dim: Option<usize>,
) -> CliResult<Dataset> {
    let bytes = fs::read(path)?;
    let (n, d, data, format) = if bytes.starts_with(BINARY_MAGIC) {
        let (n, d, data) = parse_binary(path, &bytes)?;
        (n, d, data, Format::Binary)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| ingest(path, 0, "not UTF-8 text"))?;
        let (n, d, data) = parse_csv(path, &text, expected_dim)?;
        (n, d, data, Format::Csv)
    };
    if n == 0 && !allow_empty {
        return Err(ingest(path, 0, "dataset has no rows"));
    }
    if let Some(want) = expected_dim {
        if n > 0 && d != want {
            return Err(ingest(
                path,
                1,
                format!("expected dimension {want}, found {d}"),
            ));
        }
    }
    let points = Points::new(d, data).map_err(|e| match e {
        ade_core::Error::NonFinite { row, .. } => ingest(path, row + 1, "non-finite value"),
        other => CliError::Core(other),
    })?;
    Ok(Dataset {
        points,
        n,
        d,
        source: path.to_path_buf(),
        format,
    })
}

fn parse_csv(
    path: &Path,
    text: &str,
    expected_dim: Option<usize>,
) -> CliResult<(usize, usize, Vec<f64>)> {
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            // a non-numeric first line is a header
            Err(_) if n == 0 && is_first_content(text, idx) => continue,
            Err(_) => return Err(ingest(path, row, "non-numeric field")),
        };
        if let Some(col) = values.iter().position(|x| !x.is_finite()) {
            return Err(ingest(
                path,
                row,
                format!("non-finite value in column {}", col + 1),
            ));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(ingest(
                    path,
                    row,
                    format!("expected {w} fields, found {}", values.len()),
                ));
            }
            _ => {}
        }
        data.extend(values);
        n += 1;
    }
    let d = width.or(expected_dim).unwrap_or(1);
    Ok((n, d, data))
}

fn is_first_content(text: &str, idx: usize) -> bool {
    text.lines()
        .take(idx)
        .all(|l| l.trim().is_empty() || l.trim_start().starts_with('#'))
}

fn parse_binary(path: &Path, bytes: &[u8]) -> CliResult<(usize, usize, Vec<f64>)> {
    if bytes.len() < 20 {
        return Err(ingest(path, 0, "truncated binary header"));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let d = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    if d == 0 {
        return Err(ingest(path, 0, "dimension 0"));
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(20))
        .ok_or_else(|| ingest(path, 0, "header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(ingest(
            path,
            0,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
        return Err(ingest(path, pos / d + 1, "non-finite value"));
    }
    Ok((n, d, data))
}

pub fn encode_binary(points: &Points) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + points.as_slice().len() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(points.n() as u64).to_le_bytes());
    out.extend_from_slice(&(points.d() as u64).to_le_bytes());
    for x in points.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_csv(points: &Points) -> String {
    let mut out = String::new();
    for row in points.rows() {
        let fields: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
