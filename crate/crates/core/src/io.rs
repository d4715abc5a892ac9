//! Graph description files and CSV output.
//!
//! Graphs are described in strict JSON (unknown keys are rejected):
//!
//! ```json
//! {
//!   "p": 3,
//!   "vertices": [{ "id": "v", "condition": { "type": "delta", "alpha": -2 } }],
//!   "edges": [
//!     { "id": "e1", "from": "v", "to": null, "length": "inf" },
//!     { "id": "e2", "from": "v", "to": null, "length": "inf" }
//!   ]
//! }
//! ```
//!
//! General conditions carry `P_D`, `P_N`, `P_R` and `Lambda` as row-major
//! `d × d` arrays in the edge order of the vertex. Matrix entries are numbers,
//! or `[re, im]` pairs; a nonzero imaginary part is rejected when the graph is
//! built.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("syntax error at line {line}, column {column}: {msg}")]
    SyntaxError { line: usize, column: usize, msg: String },
    #[error("schema error at line {line}, column {column}: {msg}")]
    SchemaError { line: usize, column: usize, msg: String },
    #[error("semantic error: {0}")]
    SemanticError(String),
    #[error("row {row} has {got} fields, schema has {expected}")]
    Arity { row: usize, expected: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub p: f64,
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSpec {
    pub id: String,
    pub condition: ConditionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConditionSpec {
    Delta {
        alpha: f64,
    },
    Kirchhoff,
    General {
        #[serde(rename = "P_D")]
        p_d: Vec<Vec<Entry>>,
        #[serde(rename = "P_N")]
        p_n: Vec<Vec<Entry>>,
        #[serde(rename = "P_R")]
        p_r: Vec<Vec<Entry>>,
        #[serde(rename = "Lambda")]
        lambda: Vec<Vec<Entry>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edge_order: Option<Vec<String>>,
    },
}

/// A matrix entry: a real number or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    pub fn re(self) -> f64 {
        match self {
            Entry::Real(x) => x,
            Entry::Complex([re, _]) => re,
        }
    }

    pub fn im(self) -> f64 {
        match self {
            Entry::Real(_) => 0.0,
            Entry::Complex([_, im]) => im,
        }
    }
}

impl From<f64> for Entry {
    fn from(x: f64) -> Self {
        Entry::Real(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: Option<String>,
    pub length: EdgeLength,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeLength {
    Finite(f64),
    Infinite,
}

impl Serialize for EdgeLength {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EdgeLength::Finite(l) => s.serialize_f64(*l),
            EdgeLength::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for EdgeLength {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) if l > 0.0 && l.is_finite() => Ok(EdgeLength::Finite(l)),
            Raw::Num(l) => Err(serde::de::Error::custom(format!("edge length must be positive, got {l}"))),
            Raw::Text(t) if t == "inf" => Ok(EdgeLength::Infinite),
            Raw::Text(t) => {
                Err(serde::de::Error::custom(format!("edge length must be a positive number or \"inf\", got \"{t}\"")))
            }
        }
    }
}

/// Parses a graph description from text. Dangling edge endpoints are reported
/// as [`IoError::SemanticError`]; everything else structural is left to
/// [`crate::graph::build_graph`].
pub fn parse_graph_str(text: &str) -> Result<GraphSpec, IoError> {
    let spec: GraphSpec = serde_json::from_str(text).map_err(|e| {
        let (line, column, msg) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => IoError::SchemaError { line, column, msg },
            _ => IoError::SyntaxError { line, column, msg },
        }
    })?;
    for e in &spec.edges {
        for end in std::iter::once(&e.from).chain(e.to.iter()) {
            if !spec.vertices.iter().any(|v| &v.id == end) {
                return Err(IoError::SemanticError(format!("edge {} references unknown vertex {end}", e.id)));
            }
        }
    }
    Ok(spec)
}

pub fn parse_graph_file(path: impl AsRef<Path>) -> Result<GraphSpec, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::FileNotFound(path.display().to_string()),
        _ => IoError::Io(e),
    })?;
    parse_graph_str(&text)
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    /// Reals use 17 significant digits, which round-trips every `f64`.
    pub fn render(&self) -> String {
        match self {
            Cell::Real(x) if x.is_nan() => "nan".to_string(),
            Cell::Real(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

pub fn csv_string(rows: &[Vec<Cell>], schema: &[&str]) -> Result<String, IoError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(schema)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != schema.len() {
            return Err(IoError::Arity { row: i, expected: schema.len(), got: row.len() });
        }
        w.write_record(row.iter().map(Cell::render))?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(rows: &[Vec<Cell>], schema: &[&str], path: impl AsRef<Path>) -> Result<(), IoError> {
    let text = csv_string(rows, schema)?;
    fs::write(path, text)?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`] back as a header and rows of strings.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<String>>), IoError> {
    let mut r = csv::ReaderBuilder::new().from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Plain `key = value` run manifest.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        fs::write(path, self.render())?;
        Ok(())
    }
}
