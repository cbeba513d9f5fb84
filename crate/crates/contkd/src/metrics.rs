//! Per-epoch metrics CSV.

use std::io::Write;
use std::path::Path;

use contkd_core::EpochRow;

use crate::error::{AppError, Result};

pub const HEADER: [&str; 7] = [
    "epoch",
    "temperature",
    "phi",
    "psi",
    "train_loss",
    "val_metric",
    "is_best",
];

/// Shortest round-trip form; empty for a missing value.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> AppError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AppError::io(path, io),
        other => AppError::Config(format!("{}: {other:?}", path.display())),
    }
}

/// Serializes rows with the fixed header, one line per epoch, LF endings.
pub fn to_csv(rows: &[EpochRow]) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.temperature.map(|t| t.to_string()).unwrap_or_default(),
            fmt_opt(r.phi),
            fmt_opt(r.psi),
            r.train_loss.to_string(),
            r.val_metric.to_string(),
            r.is_best.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_metrics(path: &Path, rows: &[EpochRow]) -> Result<()> {
    std::fs::write(path, to_csv(rows)).map_err(|e| AppError::io(path, e))
}

/// One parsed metrics line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: u32,
    pub temperature: Option<u32>,
    pub phi: Option<f64>,
    pub psi: Option<f64>,
    pub train_loss: f64,
    pub val_metric: f64,
    pub is_best: bool,
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| {
        AppError::Config(format!(
            "{}: line {line}: bad {name} value `{s}`",
            path.display()
        ))
    })
}

fn opt_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(path, line, name, s).map(Some)
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(HEADER) {
        return Err(AppError::Config(format!(
            "{}: not a metrics file (header `{}`)",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        rows.push(MetricsRow {
            epoch: field(path, line, "epoch", &rec[0])?,
            temperature: opt_field(path, line, "temperature", &rec[1])?,
            phi: opt_field(path, line, "phi", &rec[2])?,
            psi: opt_field(path, line, "psi", &rec[3])?,
            train_loss: field(path, line, "train_loss", &rec[4])?,
            val_metric: field(path, line, "val_metric", &rec[5])?,
            is_best: field(path, line, "is_best", &rec[6])?,
        });
    }
    Ok(rows)
}
