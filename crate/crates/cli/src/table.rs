//! Tabular output written as CSV or JSON.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use banditlab::output::{csv_line, fmt_f64};
use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Self::Text(s) => s.clone(),
            Self::Int(i) => i.to_string(),
            Self::Float(x) => fmt_f64(*x),
            Self::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Text(s) => Value::String(s.clone()),
            Self::Int(i) => Value::from(*i),
            Self::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Self::Bool(b) => Value::Bool(*b),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Self::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Self::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Self::Int(i as u64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Self::Int(i)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Self::Float(x)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Self::Bool(b)
    }
}

/// Builds a row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($v:expr),* $(,)?) => { vec![$($crate::table::Cell::from($v)),*] };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
    /// Reason the table is incomplete; written as a trailing `FAILED` row.
    pub failed: Option<String>,
}

impl Table {
    pub fn new(name: &'static str, header: &'static [&'static str]) -> Self {
        Self {
            name,
            header,
            rows: Vec::new(),
            failed: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn fail(&mut self, reason: impl Into<String>) {
        let reason = reason.into();
        self.failed = Some(match self.failed.take() {
            Some(prev) => format!("{prev}; {reason}"),
            None => reason,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = csv_line(self.header);
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&csv_line(&cells));
        }
        if let Some(reason) = &self.failed {
            out.push_str(&csv_line(&[
                "FAILED".to_string(),
                reason.replace([',', '\n', '\r'], " "),
            ]));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(k, v)| (k.to_string(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut obj = Map::new();
        obj.insert("table".into(), Value::String(self.name.into()));
        obj.insert("rows".into(), Value::Array(rows));
        obj.insert(
            "failed".into(),
            self.failed.clone().map_or(Value::Null, Value::String),
        );
        Value::Object(obj)
    }

    /// Writes `<dir>/<name>.csv` or `<dir>/<name>.json`.
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf, CliError> {
        let (path, body) = match format {
            Format::Csv => (dir.join(format!("{}.csv", self.name)), self.to_csv()),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.to_json()).expect("json value");
                s.push('\n');
                (dir.join(format!("{}.json", self.name)), s)
            }
        };
        write_file(&path, body.as_bytes())?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    w.write_all(bytes).map_err(io)?;
    w.flush().map_err(io)
}
