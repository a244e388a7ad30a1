//! Report rows, the incremental cell log, and the human-readable summary.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Cell, ExperimentSpec};
use crate::error::{Error, Result};
use crate::types::Method;

const REPORT_FILE: &str = "report.csv";
const SUMMARY_FILE: &str = "summary.txt";
const PARTIAL_FILE: &str = "cells.partial.csv";
const FINGERPRINT_FILE: &str = "cells.partial.fingerprint";

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

/// One `(method, factor, trial)` result.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub factor: usize,
    pub trial: usize,
    pub rmse_m: f64,
    pub status: Status,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    method: String,
    factor: usize,
    trial: usize,
    rmse_m: f64,
    status: String,
}

impl From<&ReportRow> for CsvRow {
    fn from(r: &ReportRow) -> Self {
        CsvRow {
            method: r.method.clone(),
            factor: r.factor,
            trial: r.trial,
            rmse_m: r.rmse_m,
            status: match &r.status {
                Status::Ok => "ok".into(),
                Status::Failed(e) => format!("error: {e}"),
            },
        }
    }
}

impl From<CsvRow> for ReportRow {
    fn from(r: CsvRow) -> Self {
        let status = match r.status.strip_prefix("error: ") {
            Some(e) => Status::Failed(e.to_string()),
            None => Status::Ok,
        };
        ReportRow {
            method: r.method,
            factor: r.factor,
            trial: r.trial,
            rmse_m: r.rmse_m,
            status,
        }
    }
}

impl ReportRow {
    pub fn ok(method: impl Into<String>, factor: usize, trial: usize, rmse_m: f64) -> Self {
        Self {
            method: method.into(),
            factor,
            trial,
            rmse_m,
            status: Status::Ok,
        }
    }

    pub fn from_result(cell: &Cell, result: Result<f64>) -> Self {
        match result {
            Ok(v) => Self::ok(cell.method_name(), cell.factor, cell.trial, v),
            Err(e) => Self {
                method: cell.method_name(),
                factor: cell.factor,
                trial: cell.trial,
                rmse_m: f64::NAN,
                status: Status::Failed(e.to_string()),
            },
        }
    }

    pub fn matches(&self, cell: &Cell) -> bool {
        self.method == cell.method_name() && self.factor == cell.factor && self.trial == cell.trial
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Baseline first, then methods by tag, then any other label by name.
    fn sort_key(&self) -> (u8, String, usize, usize) {
        let rank = if self.method == "baseline" {
            0
        } else {
            self.method.parse::<Method>().map_or(u8::MAX, |m| m.tag())
        };
        (rank, self.method.clone(), self.factor, self.trial)
    }
}

/// Aggregate of the successful trials of one `(method, factor)` group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub method: String,
    pub factor: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

/// Group sorted rows by `(method, factor)`. Means add trials in trial order.
pub fn summarize(rows: &[ReportRow]) -> Vec<GroupSummary> {
    let mut out: Vec<GroupSummary> = Vec::new();
    let mut groups: Vec<(&str, usize, Vec<&ReportRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(m, f, _)| *m == r.method && *f == r.factor) {
            Some((_, _, g)) => g.push(r),
            None => groups.push((&r.method, r.factor, vec![r])),
        }
    }
    for (method, factor, mut g) in groups {
        g.sort_by_key(|r| r.trial);
        let vals: Vec<f64> = g.iter().filter(|r| r.is_ok()).map(|r| r.rmse_m).collect();
        let n = vals.len();
        let (mean, min, max, std) = if n == 0 {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = vals.iter().sum::<f64>() / n as f64;
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max, crate::stats::std_dev(&vals))
        };
        out.push(GroupSummary {
            method: method.to_string(),
            factor,
            n_ok: n,
            n_failed: g.len() - n,
            mean,
            min,
            max,
            std,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    rows: Vec<ReportRow>,
}

impl Report {
    /// Sorts the rows into their canonical order.
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by_key(|r| r.sort_key());
        Self { rows }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn summary(&self) -> Vec<GroupSummary> {
        summarize(&self.rows)
    }

    /// Mean RMSE of a group, `None` if absent or fully failed.
    pub fn mean(&self, method: &str, factor: usize) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|g| g.method == method && g.factor == factor && g.n_ok > 0)
            .map(|g| g.mean)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow::from(r)).map_err(csv_error)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize::<CsvRow>()
            .map(|row| row.map(ReportRow::from).map_err(csv_error))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(rows))
    }

    pub fn summary_text(&self, title: &str, config_echo: &str, elapsed: Duration, threads: usize) -> String {
        let mut s = String::new();
        s.push_str(&format!("# {title}\n\n"));
        s.push_str(&format!(
            "{:<20} {:>6} {:>4} {:>10} {:>10} {:>10} {:>10}\n",
            "method", "factor", "n", "mean_m", "min_m", "max_m", "std_m"
        ));
        for g in self.summary() {
            s.push_str(&format!(
                "{:<20} {:>6} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                g.method, g.factor, g.n_ok, g.mean, g.min, g.max, g.std
            ));
            if g.n_failed > 0 {
                s.push_str(&format!("  ({} failed)", g.n_failed));
            }
            s.push('\n');
        }
        let failures: Vec<&ReportRow> = self.rows.iter().filter(|r| !r.is_ok()).collect();
        if !failures.is_empty() {
            s.push_str("\nfailures:\n");
            for r in failures {
                if let Status::Failed(e) = &r.status {
                    s.push_str(&format!("  {} factor {} trial {}: {e}\n", r.method, r.factor, r.trial));
                }
            }
        }
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        s.push_str(&format!(
            "\nruntime: {:.1} s on {threads} thread(s), finished at unix time {stamp}, csiaug {}\n",
            elapsed.as_secs_f64(),
            env!("CARGO_PKG_VERSION")
        ));
        s.push_str("\n# configuration\n\n");
        s.push_str(config_echo);
        s
    }

    /// Write `report.csv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path, spec: &ExperimentSpec, elapsed: Duration, threads: usize) -> Result<()> {
        self.write_with_echo(dir, &spec.name, &spec.to_toml()?, elapsed, threads)
    }

    pub fn write_with_echo(&self, dir: &Path, title: &str, echo: &str, elapsed: Duration, threads: usize) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(REPORT_FILE);
        fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let sum_path = dir.join(SUMMARY_FILE);
        fs::write(&sum_path, self.summary_text(title, echo, elapsed, threads)).map_err(|e| Error::io(&sum_path, e))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        what: "report csv".into(),
        message: e.to_string(),
    }
}

/// Append-only log of finished cells, tied to one spec fingerprint.
pub(crate) struct PartialLog {
    path: PathBuf,
    fingerprint_path: PathBuf,
    file: File,
    completed: Vec<ReportRow>,
}

impl PartialLog {
    /// Reuse the log in `dir` if it belongs to `fingerprint`, else start over.
    pub(crate) fn open(dir: &Path, fingerprint: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(PARTIAL_FILE);
        let fingerprint_path = dir.join(FINGERPRINT_FILE);
        let same = fs::read_to_string(&fingerprint_path).is_ok_and(|f| f.trim() == fingerprint);
        let mut completed = Vec::new();
        if same && path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
            for rec in r.deserialize::<CsvRow>() {
                // A torn final line from a crash is dropped and recomputed.
                match rec {
                    Ok(row) => completed.push(ReportRow::from(row)),
                    Err(_) => break,
                }
            }
        }
        fs::write(&fingerprint_path, fingerprint).map_err(|e| Error::io(&fingerprint_path, e))?;
        let mut body = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut body);
            for row in &completed {
                w.serialize(CsvRow::from(row)).map_err(csv_error)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            fingerprint_path,
            file,
            completed,
        })
    }

    pub(crate) fn completed(&self) -> Vec<ReportRow> {
        self.completed.clone()
    }

    pub(crate) fn append(&mut self, row: &ReportRow) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(CsvRow::from(row)).map_err(csv_error)?;
        let line = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        self.file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    /// Drop the log once the full report is on disk.
    pub(crate) fn finish(self) -> Result<()> {
        fs::remove_file(&self.path).map_err(|e| Error::io(&self.path, e))?;
        fs::remove_file(&self.fingerprint_path).map_err(|e| Error::io(&self.fingerprint_path, e))
    }
}
