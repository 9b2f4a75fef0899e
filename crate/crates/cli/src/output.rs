//! Table and report writers. Every table starts with a provenance header;
//! floats are written in shortest round-trip form so reruns are
//! byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format!("{v}"),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) if v.is_finite() => serde_json::json!(v),
            Cell::F(_) | Cell::Empty => Value::Null,
            Cell::I(v) => serde_json::json!(v),
            Cell::S(s) => Value::String(s.clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Provenance written at the top of every table.
#[derive(Clone, Debug, Serialize)]
pub struct Header {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub params: Value,
}

impl Header {
    fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# {}", self.tool),
            format!("# command: {}", self.command),
            format!("# config_sha256: {}", self.config_sha256),
            format!("# seed: {}", self.seed),
        ];
        if let Value::Object(map) = &self.params {
            for (k, v) in map {
                lines.push(format!("# {k} = {v}"));
            }
        }
        lines
    }
}

pub struct Writer {
    pub dir: PathBuf,
    pub format: Format,
    pub header: Header,
}

impl Writer {
    pub fn new(dir: &Path, format: Format, header: Header) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf(), format, header })
    }

    fn create(&self, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(CliError::io(&path))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Writes `stem.csv` or `stem.json` depending on the format; returns the
    /// path.
    pub fn table(&self, stem: &str, table: &Table) -> CliResult<PathBuf> {
        match self.format {
            Format::Csv => self.csv(&format!("{stem}.csv"), table, &[]),
            Format::Json => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| Value::Object(table.columns.iter().zip(r).map(|(c, v)| (c.to_string(), v.json())).collect()))
                    .collect();
                let doc = serde_json::json!({ "header": self.header, "columns": table.columns, "rows": rows });
                self.json(&format!("{stem}.json"), &doc)
            }
        }
    }

    /// CSV regardless of `--format`, with extra comment lines after the
    /// header (used for trace files that declare their layout).
    pub fn csv(&self, name: &str, table: &Table, extra_comments: &[String]) -> CliResult<PathBuf> {
        let (path, mut out) = self.create(name)?;
        let io = CliError::io(&path);
        let mut text = String::new();
        for line in self.header.comment_lines().iter().chain(extra_comments) {
            text.push_str(line);
            text.push('\n');
        }
        out.write_all(text.as_bytes()).map_err(io)?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let to_io = |e: csv::Error| CliError::Io { path: path.clone(), source: std::io::Error::other(e) };
        w.write_record(&table.columns).map_err(to_io)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::text)).map_err(to_io)?;
        }
        w.flush().map_err(|e| CliError::Io { path: path.clone(), source: e })?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let (path, mut out) = self.create(name)?;
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
        text.push('\n');
        out.write_all(text.as_bytes()).map_err(CliError::io(&path))?;
        out.flush().map_err(CliError::io(&path))?;
        Ok(path)
    }

    /// A report object with the header embedded.
    pub fn report(&self, stem: &str, body: Value) -> CliResult<PathBuf> {
        self.json(&format!("{stem}.json"), &serde_json::json!({ "header": self.header, "report": body }))
    }
}
