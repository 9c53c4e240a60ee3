//! Numeric tables and JSON artifacts written under the output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};
use tailbound::io::{fmt_num, read_csv, to_json, write_csv};

use crate::config::Format;

pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

fn cell(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(fmt_num(x)), Value::Number)
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Writes `name.csv` or `name.json` (an array of row objects).
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{}.csv", self.name));
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_csv(BufWriter::new(file), &self.header, &self.rows)?;
                Ok(path)
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: Map<String, Value> = self.header.iter().map(|h| h.to_string()).zip(r.iter().map(|&x| cell(x))).collect();
                        Value::Object(obj)
                    })
                    .collect();
                write_json(dir, self.name, &rows)
            }
        }
    }
}

pub fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, to_json(value)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Reads back a table written by [`Table::write`] in either format.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let rows: Vec<Map<String, Value>> = serde_json::from_str(&text)?;
        let header: Vec<String> = rows.first().map(|r| r.keys().cloned().collect()).unwrap_or_default();
        let body = rows
            .iter()
            .map(|r| {
                header
                    .iter()
                    .map(|h| match &r[h] {
                        Value::Number(n) => Ok(n.as_f64().unwrap_or(f64::NAN)),
                        Value::String(s) => Ok(tailbound::io::parse_num(s)?),
                        other => anyhow::bail!("unexpected cell {other}"),
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((header, body))
    } else {
        Ok(read_csv(text.as_bytes())?)
    }
}
