//! Report tables, atomic file output and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    /// Non-finite floats become the strings `"inf"`, `"-inf"`, `"NaN"`.
    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Text(s) => json!(s),
        }
    }
}

/// A named table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &str) -> Self {
        Table { name: name.into(), columns: header.split(',').map(String::from).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn header(&self) -> String {
        self.columns.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect();
                Value::Object(obj)
            })
            .collect();
        json!({ "schema_version": SCHEMA_VERSION, "name": self.name, "columns": self.columns, "rows": rows })
    }

    /// Column `name` as floats (integers widened).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Int(v) => Some(*v as f64),
                Cell::Float(v) => Some(*v),
                Cell::Text(_) => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    /// Free-form JSON objects written verbatim, by file stem.
    pub documents: Vec<(String, Value)>,
    pub summary: Map<String, Value>,
    pub notes: Vec<String>,
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    if let Err(e) = fs::rename(&tmp, &target) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(target)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub file: String,
    pub schema_version: u32,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config: Value,
    pub rng: String,
    pub threads: usize,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    pub started_unix_ms: u128,
    pub wall_time_s: f64,
}

fn pretty(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

/// Writes all tables, documents and `summary.json`; returns manifest file entries.
pub fn write_report(dir: &Path, report: &Report, format: Format) -> Result<Vec<FileEntry>> {
    let mut files = Vec::new();
    for t in &report.tables {
        let (file, bytes) = match format {
            Format::Csv => (format!("{}.csv", t.name), t.to_csv().into_bytes()),
            Format::Json => (format!("{}.json", t.name), pretty(&t.to_json())),
        };
        write_atomic(dir, &file, &bytes)?;
        files.push(FileEntry { file, schema_version: SCHEMA_VERSION, columns: t.columns.clone() });
    }
    for (stem, doc) in &report.documents {
        let file = format!("{stem}.json");
        write_atomic(dir, &file, &pretty(doc))?;
        files.push(FileEntry { file, schema_version: SCHEMA_VERSION, columns: Vec::new() });
    }
    let mut summary = report.summary.clone();
    summary.insert("schema_version".into(), json!(SCHEMA_VERSION));
    write_atomic(dir, "summary.json", &pretty(&Value::Object(summary)))?;
    files.push(FileEntry { file: "summary.json".into(), schema_version: SCHEMA_VERSION, columns: Vec::new() });
    Ok(files)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let value = serde_json::to_value(manifest)?;
    write_atomic(dir, "manifest.json", &pretty(&value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("demo", "n,x,label");
        t.push(vec![3usize.into(), 0.1f64.into(), "a".into()]);
        t.push(vec![4usize.into(), f64::INFINITY.into(), "b".into()]);
        t
    }

    #[test]
    fn csv_and_json() {
        let t = sample();
        assert_eq!(t.to_csv(), "n,x,label\n3,0.1,a\n4,inf,b\n");
        let j = t.to_json();
        assert_eq!(j["schema_version"], 1);
        assert_eq!(j["rows"][0]["x"], 0.1);
        assert_eq!(j["rows"][1]["x"], "inf");
        assert_eq!(t.column("n").unwrap(), vec![3.0, 4.0]);
        assert!(t.column("label").is_none());
    }

    #[test]
    #[should_panic]
    fn row_width_checked() {
        Table::new("t", "a,b").push(vec![1usize.into()]);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = Report { tables: vec![sample()], ..Default::default() };
        report.summary.insert("ok".into(), json!(true));
        let files = write_report(dir.path(), &report, Format::Csv).unwrap();
        assert_eq!(files.len(), 2);
        let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
        assert_eq!(fs::read_to_string(dir.path().join("demo.csv")).unwrap(), sample().to_csv());
        let files = write_report(dir.path(), &report, Format::Json).unwrap();
        assert_eq!(files[0].file, "demo.json");
    }
}
