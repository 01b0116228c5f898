//! Tabular reports and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        Cell::Num(v.unwrap_or(f64::NAN))
    }
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

impl Cell {
    fn csv_text(&self) -> String {
        match self {
            Cell::Num(v) => format_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Num(v) if v.is_finite() => RawValue::from_string(format_num(*v))
                .map_err(serde::ser::Error::custom)?
                .serialize(s),
            Cell::Num(_) => s.serialize_none(),
            Cell::Int(v) => s.serialize_i64(*v),
            Cell::Bool(v) => s.serialize_bool(*v),
            Cell::Text(t) => s.serialize_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, headers: &[&str]) -> Self {
        Self {
            name: name.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// A two-column `key,value` table.
    pub fn summary(name: impl Into<String>) -> Self {
        Self::new(name, &["key", "value"])
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn kv(&mut self, key: &str, value: impl Into<Cell>) {
        self.push(vec![key.into(), value.into()]);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(format!("table {}: {e}", self.name));
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv_text)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        let mut text = serde_json::to_string_pretty(&JsonRows(self)).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }
}

struct JsonRows<'a>(&'a Table);
struct JsonRow<'a>(&'a [String], &'a [Cell]);

impl Serialize for JsonRows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.0.rows.len()))?;
        for row in &self.0.rows {
            seq.serialize_element(&JsonRow(&self.0.headers, row))?;
        }
        seq.end()
    }
}

impl Serialize for JsonRow<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub format: Format,
    /// Some quantity missed its tolerance; its best estimate was reported.
    pub partial: bool,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

/// Everything one command produces.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
    pub partial: bool,
}

impl RunOutput {
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    /// Marks the run partial because of a quadrature failure.
    pub fn fail(&mut self, msg: impl Into<String>) {
        self.partial = true;
        self.warn(msg);
    }

    pub fn absorb(&mut self, other: RunOutput) {
        self.tables.extend(other.tables);
        for w in other.warnings {
            self.warn(w);
        }
        self.partial |= other.partial;
    }

    /// Writes every table plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, format: Format, mut manifest: Manifest) -> Result<Vec<PathBuf>, CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::new();
        for t in &self.tables {
            let (ext, body) = match format {
                Format::Csv => ("csv", t.to_csv()?),
                Format::Json => ("json", t.to_json()?),
            };
            let file = format!("{}.{ext}", t.name);
            let path = dir.join(&file);
            fs::write(&path, body).map_err(|e| io(&path, e))?;
            manifest.files.push(file);
            written.push(path);
        }
        manifest.partial = self.partial;
        manifest.warnings = self.warnings.clone();
        let path = dir.join("manifest.json");
        let mut body = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        body.push('\n');
        fs::write(&path, body).map_err(|e| io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}
