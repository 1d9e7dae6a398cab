//! Trajectory files: CSV with a fixed header, JSON with a summary block.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dynamics::INPUT_DIM;
use crate::sim::{LogRecord, LogSummary, Model, RecordStatus, ScenarioConfig, TrajectoryLog};

pub const CSV_HEADER: &str =
    "t,x,y,z,r,h,psi1,u1,u2,u3,u4,u5,unom1,unom2,unom3,unom4,unom5,qp_active,qp_status";

const COLUMNS: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "both" => Some(Format::Both),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Both => "both",
        }
    }

    pub fn csv(&self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(&self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(thiserror::Error, Debug)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// 17 significant digits; `{:e}` never loses a bit at this precision.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(log: &TrajectoryLog, out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    let mut row: Vec<String> = Vec::with_capacity(COLUMNS);
    for r in &log.records {
        row.clear();
        row.push(fmt_float(r.t));
        row.extend(r.position.iter().map(|v| fmt_float(*v)));
        row.push(fmt_float(r.r));
        row.push(fmt_float(r.h));
        row.push(r.psi1.map(fmt_float).unwrap_or_default());
        row.extend(r.u_star.iter().map(|v| fmt_float(*v)));
        row.extend(r.u_nom.iter().map(|v| fmt_float(*v)));
        row.push(if r.qp_active { "1" } else { "0" }.to_string());
        row.push(r.qp_status.as_str().to_string());
        w.write_record(&row)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct JsonLog<'a> {
    summary: &'a LogSummary,
    records: &'a [LogRecord],
}

pub fn write_json<W: Write>(log: &TrajectoryLog, out: W) -> io::Result<()> {
    let doc = JsonLog {
        summary: &log.summary,
        records: &log.records,
    };
    let mut out = out;
    serde_json::to_writer(&mut out, &doc)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Writes `<dir>/<stem>.csv` and/or `<dir>/<stem>.json`; returns the paths.
pub fn write_trajectory(
    log: &TrajectoryLog,
    dir: &Path,
    stem: &str,
    format: Format,
) -> Result<Vec<PathBuf>, OutputError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(format!("{stem}.csv"));
        let file = File::create(&path).map_err(io_err(&path))?;
        write_csv(log, BufWriter::new(file)).map_err(io_err(&path))?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join(format!("{stem}.json"));
        let file = File::create(&path).map_err(io_err(&path))?;
        write_json(log, BufWriter::new(file)).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

fn malformed(line: u64, message: impl Into<String>) -> OutputError {
    OutputError::Malformed {
        line,
        message: message.into(),
    }
}

/// Reads a CSV written by [`write_csv`]. Records carry no full state. The
/// summary's final error is measured against `config`'s reference.
pub fn read_csv<R: Read>(input: R, config: &ScenarioConfig) -> Result<TrajectoryLog, OutputError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut rows = rd.records();
    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(malformed(1, e.to_string())),
        None => return Err(malformed(1, "empty file")),
    };
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(malformed(1, format!("header must be `{CSV_HEADER}`")));
    }

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != COLUMNS {
            return Err(malformed(
                line,
                format!("expected {COLUMNS} fields, found {}", row.len()),
            ));
        }
        let num = |i: usize| -> Result<f64, OutputError> {
            let field = &row[i];
            field.trim().parse::<f64>().map_err(|_| {
                malformed(line, format!("column `{}`: not a number: `{field}`", column(i)))
            })
        };
        let mut u_star = [0.0; INPUT_DIM];
        let mut u_nom = [0.0; INPUT_DIM];
        for k in 0..INPUT_DIM {
            u_star[k] = num(7 + k)?;
            u_nom[k] = num(12 + k)?;
        }
        let psi1 = if row[6].is_empty() { None } else { Some(num(6)?) };
        let qp_active = match &row[17] {
            "1" => true,
            "0" => false,
            other => return Err(malformed(line, format!("qp_active must be 0 or 1, got `{other}`"))),
        };
        let qp_status = RecordStatus::parse(&row[18])
            .ok_or_else(|| malformed(line, format!("unknown qp_status `{}`", &row[18])))?;
        let t = num(0)?;
        if let Some(prev) = records.last().map(|r: &LogRecord| r.t) {
            if !(t > prev) {
                return Err(malformed(line, "time must be strictly increasing"));
            }
        }
        records.push(LogRecord {
            t,
            state: Vec::new(),
            position: [num(1)?, num(2)?, num(3)?],
            r: num(4)?,
            h: num(5)?,
            psi1,
            u_star,
            u_nom,
            qp_active,
            qp_status,
        });
    }
    Ok(TrajectoryLog::new(records, config))
}

fn column(i: usize) -> &'static str {
    CSV_HEADER.split(',').nth(i).unwrap_or("?")
}

pub fn read_csv_file(path: &Path, config: &ScenarioConfig) -> Result<TrajectoryLog, OutputError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_csv(io::BufReader::new(file), config)
}

/// Best-effort config for a bare CSV: `L_max` from `r + h`, the model from
/// whether `psi1` was logged, the filter flag from `qp_status`, and `dt` and
/// duration from the time column. Everything else is default.
pub fn infer_config(log: &TrajectoryLog) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    let Some(first) = log.records.first() else {
        return c;
    };
    let l_max = first.r + first.h;
    if l_max.is_finite() && l_max > 0.0 {
        c = c.with_l_max(l_max);
    }
    if first.psi1.is_none() {
        c.model = Model::SingleIntegrator;
    }
    c.filter_enabled = log
        .records
        .iter()
        .any(|r| r.qp_status != RecordStatus::Disabled);
    if let (Some(a), Some(b)) = (log.records.first(), log.records.get(1)) {
        let dt = b.t - a.t;
        if dt > 0.0 && dt <= 0.1 {
            c.dt = dt;
        }
    }
    if let Some(last) = log.records.last() {
        let span = last.t - first.t;
        if span > 0.0 {
            c.duration = span;
        }
    }
    c
}
