//! CSV and JSON output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    /// Floats with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Float(x) => x.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// One CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Column `name` as floats.
    pub fn column(&self, name: &str) -> Vec<Option<f64>> {
        let k = self.header.iter().position(|h| *h == name).expect("known column");
        self.rows.iter().map(|r| r[k].as_f64()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub summary: Value,
    /// Verdict of check experiments; `None` for measurements.
    pub passed: Option<bool>,
}

impl ExperimentOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// `sha256("blob <len>\0" + bytes)` over the concatenated inputs.
pub fn content_hash(inputs: &[&[u8]]) -> String {
    let total: usize = inputs.iter().map(|b| b.len()).sum();
    let mut h = Sha256::new();
    h.update(format!("blob {total}\0").as_bytes());
    for b in inputs {
        h.update(b);
    }
    format!("{:x}", h.finalize())
}

/// Hash of the canonical config plus any graph file it references.
pub fn input_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canon = serde_json::to_vec(cfg)?;
    let graph = match &cfg.code {
        crate::config::CodeSpec::File { path } => std::fs::read(path)?,
        _ => Vec::new(),
    };
    Ok(content_hash(&[&canon, &graph]))
}

#[derive(Serialize)]
struct Record<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    input_hash: String,
    passed: Option<bool>,
    summary: &'a Value,
    files: Vec<String>,
}

/// Writes the tables (CSV) or the summary record (JSON) into `dir` and
/// returns the written paths.
pub fn emit(out: &ExperimentOutput, cfg: &ExperimentConfig, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let kind = cfg.kind()?.as_str();
    match format {
        Format::Csv => {
            let mut paths = Vec::new();
            for t in &out.tables {
                let p = dir.join(format!("{}.csv", t.name));
                std::fs::write(&p, t.to_csv()?)?;
                paths.push(p);
            }
            Ok(paths)
        }
        Format::Json => {
            let rec = Record {
                experiment: kind,
                config: cfg,
                input_hash: input_hash(cfg)?,
                passed: out.passed,
                summary: &out.summary,
                files: out.tables.iter().map(|t| format!("{}.csv", t.name)).collect(),
            };
            let p = dir.join(format!("{kind}.json"));
            let mut text = serde_json::to_string_pretty(&rec)?;
            text.push('\n');
            std::fs::write(&p, text)?;
            Ok(vec![p])
        }
    }
}

/// Summary helper: `{"key": value}` objects from pairs.
pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut m = serde_json::Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}

/// A float as JSON, `null` when not finite.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
