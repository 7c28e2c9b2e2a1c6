//! File formats: delimited numeric tables, JSON documents and JSON Lines traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::emissions::Family;
use crate::error::{Result, ShgpError};
use crate::inference::{IterationLog, Trace, TraceRecord};

pub const TRACE_FORMAT: &str = "shgp-trace";
pub const TRACE_VERSION: u32 = 1;

/// A headered numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn sniff_delimiter(first_line: &str) -> u8 {
    b"\t,;"
        .iter()
        .copied()
        .find(|d| first_line.as_bytes().contains(d))
        .unwrap_or(b',')
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| ShgpError::io(path, e))?;
    let delimiter = sniff_delimiter(text.lines().next().unwrap_or(""));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ShgpError::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ShgpError::format(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    ShgpError::format(path, format!("row {}: '{field}' is not a number", n + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(ShgpError::format(path, "no data rows"));
    }
    Ok(Table { header, rows })
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| ShgpError::format(path, e.to_string()))?;
    writer
        .write_record(header)
        .map_err(|e| ShgpError::format(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(|e| ShgpError::format(path, e.to_string()))?;
    }
    writer.flush().map_err(|e| ShgpError::io(path, e))
}

/// T x L observations, row-major.
pub fn read_observations(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let table = read_table(path)?;
    let l = table.header.len();
    let t = table.rows.len();
    let values: Vec<f64> = table.rows.into_iter().flatten().collect();
    if values.len() != t * l {
        return Err(ShgpError::format(path, "rows have unequal lengths"));
    }
    Ok((t, l, values))
}

/// A 0/1 table of the data's shape; 1 marks a held-out cell.
pub fn read_mask(path: &Path, t: usize, l: usize) -> Result<Vec<bool>> {
    let (mt, ml, values) = read_observations(path)?;
    if (mt, ml) != (t, l) {
        return Err(ShgpError::Dimension(format!(
            "mask is {mt}x{ml} but the data is {t}x{l}"
        )));
    }
    values
        .into_iter()
        .map(|v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(ShgpError::format(
                path,
                format!("mask value {other} is not 0 or 1"),
            )),
        })
        .collect()
}

pub fn write_mask(path: &Path, l: usize, mask: &[bool]) -> Result<()> {
    let rows: Vec<Vec<f64>> = mask
        .chunks(l)
        .map(|r| r.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
        .collect();
    write_table(path, &column_names("m", l), &rows)
}

pub fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| ShgpError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| ShgpError::format(path, e.to_string()))?;
    out.write_all(b"\n").map_err(|e| ShgpError::io(path, e))?;
    out.flush().map_err(|e| ShgpError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| ShgpError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ShgpError::format(path, e.to_string()))
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub family: Family,
    pub k: usize,
    pub t: usize,
    pub l: usize,
    pub reversible: bool,
}

impl TraceHeader {
    pub fn new(
        config_hash: String,
        family: Family,
        k: usize,
        t: usize,
        l: usize,
        reversible: bool,
    ) -> Self {
        Self {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            config_hash,
            family,
            k,
            t,
            l,
            reversible,
        }
    }
}

fn write_json_line<T: Serialize, W: Write>(out: &mut W, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| ShgpError::format(path, e.to_string()))?;
    out.write_all(b"\n").map_err(|e| ShgpError::io(path, e))
}

/// Writes the header line then one JSON record per retained sample.
pub fn write_trace(path: &Path, header: &TraceHeader, trace: &Trace) -> Result<()> {
    let file = File::create(path).map_err(|e| ShgpError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_json_line(&mut out, path, header)?;
    for record in &trace.records {
        write_json_line(&mut out, path, record)?;
    }
    out.flush().map_err(|e| ShgpError::io(path, e))
}

/// Reads and validates a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<(TraceHeader, Trace)> {
    let file = File::open(path).map_err(|e| ShgpError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| ShgpError::format(path, "empty trace file"))?
        .map_err(|e| ShgpError::io(path, e))?;
    let header: TraceHeader = serde_json::from_str(&first)
        .map_err(|e| ShgpError::format(path, format!("bad header: {e}")))?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(ShgpError::format(
            path,
            format!("unsupported trace {} v{}", header.format, header.version),
        ));
    }
    let mut trace = Trace::default();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| ShgpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| ShgpError::format(path, format!("record {}: {e}", n + 1)))?;
        record
            .state
            .validate()
            .map_err(|e| ShgpError::format(path, format!("record {}: {e}", n + 1)))?;
        let s = &record.state;
        if s.h.k != header.k || s.x.len() != header.t || s.params.dims() != header.l {
            return Err(ShgpError::format(
                path,
                format!("record {} does not match the header dimensions", n + 1),
            ));
        }
        trace.records.push(record);
    }
    Ok((header, trace))
}

/// CSV sink for per-iteration summaries.
pub struct IterationLogWriter {
    writer: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl IterationLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer =
            csv::Writer::from_path(path).map_err(|e| ShgpError::format(path, e.to_string()))?;
        writer
            .write_record([
                "iteration",
                "log_posterior",
                "alpha0",
                "alpha",
                "occupied",
                "j_accept",
                "step_size",
            ])
            .map_err(|e| ShgpError::format(path, e.to_string()))?;
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, log: &IterationLog) -> Result<()> {
        self.writer
            .write_record([
                log.iteration.to_string(),
                format!("{:?}", log.log_posterior),
                format!("{:?}", log.alpha0),
                format!("{:?}", log.alpha),
                log.occupied.to_string(),
                format!("{:?}", log.j_accept),
                format!("{:?}", log.step_size),
            ])
            .map_err(|e| ShgpError::format(&self.path, e.to_string()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer
            .flush()
            .map_err(|e| ShgpError::io(&self.path, e))
    }
}
