//! Fixed-precision JSON and CSV emission.
//!
//! JSON floats carry 17 significant digits and CSV floats 12. Integers are
//! written as integers. Object keys are sorted, so output is byte-stable.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    /// `field,value` rows from a flattened JSON document.
    pub fn fields(value: &Value) -> Self {
        let mut t = Table::new(&["field", "value"]);
        flatten("", value, &mut t);
        t
    }
}

fn flatten(prefix: &str, value: &Value, t: &mut Table) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&key(k), v, t);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, t);
            }
        }
        Value::Null => t.push(vec![prefix.into(), Cell::Empty]),
        Value::Bool(b) => t.push(vec![prefix.into(), (*b).into()]),
        Value::String(s) => t.push(vec![prefix.into(), s.clone().into()]),
        Value::Number(n) => t.push(vec![prefix.into(), number_cell(n)]),
    }
}

fn number_cell(n: &serde_json::Number) -> Cell {
    match n.as_i64() {
        Some(i) if !n.is_f64() => Cell::Int(i),
        _ => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
    }
}

/// A task's result in both output formats.
#[derive(Clone, Debug)]
pub struct Report {
    pub json: Value,
    pub csv: Table,
}

impl Report {
    pub fn new<T: Serialize>(value: &T, csv: Table) -> CliResult<Self> {
        let json = serde_json::to_value(value).map_err(|e| CliError::io(format!("serialization failed: {e}")))?;
        Ok(Report { json, csv })
    }

    /// Record-like reports: CSV is the flattened JSON.
    pub fn record<T: Serialize>(value: &T) -> CliResult<Self> {
        let json = serde_json::to_value(value).map_err(|e| CliError::io(format!("serialization failed: {e}")))?;
        let csv = Table::fields(&json);
        Ok(Report { json, csv })
    }
}

pub fn json_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Pretty-printed JSON with fixed float precision.
pub fn render_json(value: &Value) -> String {
    let mut out = String::new();
    write_json(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_json(value: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match number_cell(n) {
            Cell::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Cell::Float(x) => out.push_str(&json_float(x)),
            _ => unreachable!(),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, v) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json(v, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push_str(": ");
                write_json(v, indent + 1, out);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn render_csv(table: &Table) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::io(format!("csv: {e}"));
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        let fields: Vec<String> = row
            .iter()
            .map(|c| match c {
                Cell::Int(i) => i.to_string(),
                Cell::Float(x) => csv_float(*x),
                Cell::Text(s) => s.clone(),
                Cell::Empty => String::new(),
            })
            .collect();
        w.write_record(&fields).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::io(format!("csv: {e}")))
}
