//! Plain-text artifact helpers: CSV tables, JSON documents and hashing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::profiler::ProxyProfile;

/// Shortest round-trip representation; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn parse_f64(field: &str, path: &Path) -> Result<f64> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field
        .parse()
        .map_err(|_| Error::artifact(path, format!("bad number `{field}`")))
}

pub fn parse_usize(field: &str, path: &Path) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::artifact(path, format!("bad integer `{field}`")))
}

pub fn parse_opt_usize(field: &str, path: &Path) -> Result<Option<usize>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_usize(field, path).map(Some)
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Writes a header plus rows; `None` header writes a bare matrix.
pub fn write_csv(path: &Path, header: Option<&[&str]>, rows: &[Vec<String>]) -> Result<()> {
    ensure_parent(path)?;
    let csv_err = |e: csv::Error| Error::artifact(path, e.to_string());
    let mut w = csv::WriterBuilder::new()
        .flexible(header.is_none())
        .from_path(path)
        .map_err(csv_err)?;
    if let Some(h) = header {
        w.write_record(h).map_err(csv_err)?;
    }
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rows of a headed CSV file; the header must match `expected` exactly.
pub fn read_csv(path: &Path, expected: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::artifact(path, e.to_string()))?;
    let header = r.headers().map_err(|e| Error::artifact(path, e.to_string()))?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::artifact(
            path,
            format!("expected columns {expected:?}, found {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::artifact(path, e.to_string()))
        })
        .collect()
}

/// Reads a headed CSV whose header is only checked for a fixed prefix.
pub fn read_csv_prefix(path: &Path, prefix: &[&str]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| Error::artifact(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::artifact(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < prefix.len() || header.iter().zip(prefix).any(|(a, b)| a != b) {
        return Err(Error::artifact(path, format!("header does not start with {prefix:?}")));
    }
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::artifact(path, e.to_string()))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::artifact(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub const PROFILE_COLUMNS: [&str; 4] = ["j", "t_end", "raw", "smoothed"];

pub fn profile_path(dir: &Path, i: usize, j: usize) -> PathBuf {
    dir.join("profiles").join(format!("{i}_{j}.csv"))
}

pub fn write_profile(path: &Path, profile: &ProxyProfile) -> Result<()> {
    let rows: Vec<Vec<String>> = profile
        .rows()
        .enumerate()
        .map(|(idx, (t, raw, smooth))| vec![(idx + 1).to_string(), t.to_string(), fmt_f64(raw), fmt_f64(smooth)])
        .collect();
    write_csv(path, Some(&PROFILE_COLUMNS), &rows)
}

pub fn read_profile(path: &Path, smooth_window: usize) -> Result<ProxyProfile> {
    let rows = read_csv(path, &PROFILE_COLUMNS)?;
    let first = rows
        .first()
        .ok_or_else(|| Error::artifact(path, "empty profile"))?;
    let first_t_end = parse_usize(&first[1], path)?;
    let mut raw = Vec::with_capacity(rows.len());
    let mut smoothed = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        if parse_usize(&row[1], path)? != first_t_end + idx {
            return Err(Error::artifact(path, "t_end column is not contiguous"));
        }
        raw.push(parse_f64(&row[2], path)?);
        smoothed.push(parse_f64(&row[3], path)?);
    }
    Ok(ProxyProfile {
        raw,
        smoothed,
        first_t_end,
        smooth_window,
    })
}
