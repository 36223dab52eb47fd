//! Run reports and artifact writers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::ExperimentConfig;

/// Outcome of one built-in assertion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NonConvergence,
    Failed,
}

/// Everything written to `summary.json`. Wall-clock timings live in
/// `timings.json` so that summaries of identical runs are byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub status: Status,
    pub config: ExperimentConfig,
    pub results: Map<String, Value>,
    pub verdicts: Vec<Verdict>,
    /// File names relative to the run directory.
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
    #[serde(skip)]
    pub dir: PathBuf,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, dir: PathBuf) -> Self {
        Self {
            experiment: config.experiment.name().to_string(),
            status: Status::Ok,
            config,
            results: Map::new(),
            verdicts: Vec::new(),
            files: Vec::new(),
            error: None,
            timings: Vec::new(),
            dir,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(value).expect("result serializes"));
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.to_string(), pass, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn find(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Writes `name` into the run directory and records it in the manifest.
    pub fn csv(&mut self, name: &str, table: &Table) -> io::Result<()> {
        table.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `config.json`, `timings.json` and finally `summary.json`.
    pub fn finish(&mut self) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        cfg.push('\n');
        fs::write(self.dir.join("config.json"), cfg)?;
        let timings: Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        fs::write(self.dir.join("timings.json"), serde_json::to_string_pretty(&timings)? + "\n")?;
        for f in ["config.json", "timings.json", "summary.json"] {
            if !self.files.iter().any(|x| x == f) {
                self.files.push(f.to_string());
            }
        }
        fs::write(self.dir.join("summary.json"), self.summary_json())
    }
}

/// Stage stopwatch feeding [`ExperimentReport::timings`].
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Self(Instant::now())
    }

    pub fn lap(&mut self, report: &mut ExperimentReport, stage: &str) {
        let now = Instant::now();
        report.timings.push((stage.to_string(), (now - self.0).as_secs_f64()));
        self.0 = now;
    }
}

/// A CSV table with a header row; cells are kept as strings so floats print
/// with Rust's shortest round-trip formatting.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// Formats a float for CSV: shortest round-trip, exponent form for very
/// small or large magnitudes, `NaN`/`inf` spelled out.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

/// Reads a CSV written by [`Table::write`] back as header plus rows.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
