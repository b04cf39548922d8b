//! Tables, CSV rendering and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Value {
    /// Floats are written with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Value::Int(v) => v.to_string(),
            Value::Float(v) => format!("{v:.16e}"),
            Value::Text(v) => v.clone(),
            Value::Bool(v) => v.to_string(),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<u32> for Value {
    fn from(v: u32) -> Self {
        Value::Int(v.into())
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Columns to plot from a table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotHint {
    pub x: String,
    pub y: String,
    pub log_x: bool,
    pub log_y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    #[serde(skip)]
    pub plot: Option<PlotHint>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new(), plot: None }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn with_plot(mut self, x: &str, y: &str, log_x: bool, log_y: bool) -> Self {
        self.plot = Some(PlotHint { x: x.into(), y: y.into(), log_x, log_y });
        self
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))?;
        }
        w.into_inner().context("flushing csv")
    }

    pub fn gnuplot(&self, csv_name: &str) -> Option<String> {
        let hint = self.plot.as_ref()?;
        let col = |name: &str| self.header.iter().position(|h| h == name).map(|i| i + 1);
        let (x, y) = (col(&hint.x)?, col(&hint.y)?);
        let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\n");
        if hint.log_x {
            s += "set logscale x\n";
        }
        if hint.log_y {
            s += "set logscale y\n";
        }
        s += &format!("set xlabel '{}'\nset ylabel '{}'\n", hint.x, hint.y);
        s += &format!("plot '{csv_name}' using {x}:{y} with linespoints\n");
        Some(s)
    }
}

/// A pass/fail envelope check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Result of one experiment.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Outcome {
    pub experiment: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Text for standard output.
    #[serde(skip)]
    pub stdout: String,
}

impl Outcome {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.into(), ..Default::default() }
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, pass, detail));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Serialize)]
pub struct ExperimentRecord<'a> {
    pub experiment: &'a str,
    pub pass: bool,
    pub checks: &'a [Check],
    pub tables: &'a [Table],
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a C,
    pub wall_time_seconds: f64,
    pub pass: bool,
    pub experiments: Vec<ExperimentRecord<'a>>,
    pub files: Vec<String>,
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(".{}.tmp", path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Writes every table as `<experiment>_<table>.csv` (plus `.gp` scripts on
/// request) and returns the file names.
pub fn write_tables(dir: &Path, outcome: &Outcome, gnuplot: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for t in &outcome.tables {
        let name = format!("{}_{}.csv", outcome.experiment, t.name);
        let path = dir.join(&name);
        write_atomic(&path, &t.to_csv()?)?;
        files.push(path);
        if gnuplot {
            if let Some(script) = t.gnuplot(&name) {
                let gp = dir.join(format!("{}_{}.gp", outcome.experiment, t.name));
                write_atomic(&gp, script.as_bytes())?;
                files.push(gp);
            }
        }
    }
    Ok(files)
}
