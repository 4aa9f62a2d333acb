//! File formats.
//!
//! Point sets are CSV with a header; every column but the last is a feature
//! and the last column, named `label`, holds `+1`, `-1` or `0` (unlabeled).
//! Config files are `key = value` lines where the value is JSON (numbers,
//! strings, arrays); `#` starts a comment.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::PointSet;

/// Floats are written with 17 significant digits so they round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn read_points_csv(path: &Path) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[header.len() - 1] != "label" {
        return Err(Error::parse(path, "header must list features followed by a `label` column"));
    }
    let p = header.len() - 1;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = line + 2;
        if rec.len() != p + 1 {
            return Err(Error::parse(path, format!("row {row}: expected {} fields, found {}", p + 1, rec.len())));
        }
        let x = rec
            .iter()
            .take(p)
            .map(|f| f.parse::<f64>().map_err(|_| Error::parse(path, format!("row {row}: bad number `{f}`"))))
            .collect::<Result<Vec<f64>>>()?;
        let label = parse_label(&rec[p]).ok_or_else(|| Error::parse(path, format!("row {row}: label must be 1, -1 or 0")))?;
        points.push(x);
        labels.push(label);
    }
    PointSet::new(points, labels)
}

fn parse_label(s: &str) -> Option<i8> {
    match s.parse::<f64>().ok()? {
        1.0 => Some(1),
        -1.0 => Some(-1),
        0.0 => Some(0),
        _ => None,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

pub fn write_points_csv(path: &Path, ps: &PointSet) -> Result<()> {
    let mut header: Vec<String> = (0..ps.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    let rows = ps
        .points()
        .zip(ps.labels())
        .map(|(x, &l)| x.iter().map(|v| fmt_f64(*v)).chain(std::iter::once(l.to_string())).collect())
        .collect::<Vec<Vec<String>>>();
    write_table(path, &header, &rows)
}

/// Writes a CSV table, creating parent directories as needed.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a two-column-or-more CSV and returns the named column as floats.
pub fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let idx = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::parse(path, format!("missing column `{column}`")))?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let f = rec.get(idx).unwrap_or("");
            match f {
                "true" => Ok(1.0),
                "false" => Ok(0.0),
                _ => f.parse().map_err(|_| Error::parse(path, format!("bad value `{f}` in column `{column}`"))),
            }
        })
        .collect()
}

/// Parsed `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, Value>,
    source: String,
}

impl KvConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(source, format!("line {}: empty key", n + 1)));
            }
            let v = v.trim();
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            if entries.insert(k.to_string(), value).is_some() {
                return Err(Error::parse(source, format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn err(&self, msg: String) -> Error {
        Error::parse(self.source.as_str(), msg)
    }

    fn required(&self, key: &str) -> Result<&Value> {
        self.get(key).ok_or_else(|| self.err(format!("missing key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.required(key)?
            .as_f64()
            .ok_or_else(|| self.err(format!("`{key}` must be a number")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        if self.get(key).is_some() {
            self.f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.required(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| self.err(format!("`{key}` must be a nonnegative integer")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        if self.get(key).is_some() {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.required(key)?
            .as_str()
            .ok_or_else(|| self.err(format!("`{key}` must be a string")))
    }

    pub fn vec(&self, key: &str) -> Result<Vec<f64>> {
        to_vec(self.required(key)?).ok_or_else(|| self.err(format!("`{key}` must be an array of numbers")))
    }

    pub fn matrix(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        to_matrix(self.required(key)?).ok_or_else(|| self.err(format!("`{key}` must be an array of number arrays")))
    }

    pub fn matrices(&self, key: &str) -> Result<Vec<Vec<Vec<f64>>>> {
        self.required(key)?
            .as_array()
            .and_then(|a| a.iter().map(to_matrix).collect())
            .ok_or_else(|| self.err(format!("`{key}` must be an array of matrices")))
    }

    /// Scalar or array value as a list of numbers (for parameter grids).
    pub fn grid(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.required(key)?;
        if let Some(x) = v.as_f64() {
            return Ok(vec![x]);
        }
        self.vec(key)
    }
}

fn to_vec(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

fn to_matrix(v: &Value) -> Option<Vec<Vec<f64>>> {
    v.as_array()?.iter().map(to_vec).collect()
}
