//! CSV tables with a commented preamble naming the schema and manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const STATS_NAME: &str = "stats.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
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

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::S(v.to_string())
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

/// Scientific notation with 17 significant digits, exact on round trip.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem; the table is written to `<name>.csv`.
    pub name: String,
    pub schema_version: u32,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<&'static str>) -> Self {
        Table {
            name: name.into(),
            schema_version: 1,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn schema(&self) -> String {
        format!("{}/{}", self.name, self.schema_version)
    }

    pub fn write(&self, dir: &Path, experiment: &str) -> Result<(), ExperimentError> {
        let path = dir.join(self.file_name());
        let mut out = BufWriter::new(File::create(&path).map_err(|e| ExperimentError::io(&path, e))?);
        writeln!(out, "# schema: {}", self.schema()).map_err(|e| ExperimentError::io(&path, e))?;
        writeln!(out, "# manifest: {MANIFEST_NAME}").map_err(|e| ExperimentError::io(&path, e))?;
        writeln!(out, "# experiment: {experiment}").map_err(|e| ExperimentError::io(&path, e))?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| ExperimentError::io(&path, e))?;
        Ok(())
    }
}

/// One summary statistic, the unit of comparison between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub key: String,
    pub value: f64,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl Stat {
    pub fn new(key: impl Into<String>, value: f64) -> Self {
        Stat {
            key: key.into(),
            value,
            ci_lo: None,
            ci_hi: None,
        }
    }

    pub fn with_ci(key: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Stat {
            key: key.into(),
            value,
            ci_lo: Some(lo),
            ci_hi: Some(hi),
        }
    }
}

pub const STATS_SCHEMA_VERSION: u32 = 1;

pub fn stats_table(stats: &[Stat]) -> Table {
    let mut t = Table::new("stats", vec!["key", "value", "ci_lo", "ci_hi"]);
    t.schema_version = STATS_SCHEMA_VERSION;
    for s in stats {
        t.push(vec![s.key.clone().into(), s.value.into(), s.ci_lo.into(), s.ci_hi.into()]);
    }
    t
}

/// Reads a stats table, returning its schema line and rows.
pub fn read_stats(path: &Path) -> Result<(String, Vec<Stat>), ExperimentError> {
    let file = File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut schema = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| ExperimentError::io(path, e))?;
        match line.strip_prefix("# schema: ") {
            Some(s) => {
                schema = Some(s.trim().to_string());
                break;
            }
            None if line.starts_with('#') => continue,
            None => break,
        }
    }
    let schema = schema.ok_or_else(|| ExperimentError::Parse(format!("{}: no schema line", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let parse_opt = |s: &str| -> Result<Option<f64>, ExperimentError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| ExperimentError::Parse(format!("bad number {s:?}")))
        }
    };
    let mut stats = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(ExperimentError::Parse(format!("{}: expected 4 columns", path.display())));
        }
        stats.push(Stat {
            key: rec[0].to_string(),
            value: parse_opt(&rec[1])?.ok_or_else(|| ExperimentError::Parse("empty value".into()))?,
            ci_lo: parse_opt(&rec[2])?,
            ci_hi: parse_opt(&rec[3])?,
        });
    }
    Ok((schema, stats))
}

/// Plot data: one row per point with its confidence interval.
pub fn plot_table(name: &str) -> Table {
    Table::new(format!("plot_{name}"), vec!["series", "x", "y", "ci_lo", "ci_hi"])
}
