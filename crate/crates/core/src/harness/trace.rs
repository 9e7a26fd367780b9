use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::response::{QueryKind, Response};
use crate::{Error, Result};

/// Metrics after one interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based interaction index.
    pub t: usize,
    pub kind: QueryKind,
    pub set_size: usize,
    pub item_ids: Vec<String>,
    pub response: Response,
    pub mse_to_gt: f64,
    pub trace_sigma: f64,
    pub log_det_sigma: f64,
    pub accuracy: f64,
    pub cum_predicted_seconds: f64,
}

pub const TRACE_FORMAT: &str = "richq-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    fields: Vec<String>,
}

const FIELDS: [&str; 10] = [
    "t",
    "kind",
    "set_size",
    "item_ids",
    "response",
    "mse_to_gt",
    "trace_sigma",
    "log_det_sigma",
    "accuracy",
    "cum_predicted_seconds",
];

/// Writes a header line and then one JSON object per record.
pub fn write_trace<W: Write>(records: &[TraceRecord], mut writer: W) -> Result<()> {
    let header =
        Header { format: TRACE_FORMAT.into(), version: TRACE_VERSION, fields: FIELDS.map(String::from).to_vec() };
    let io = |e: std::io::Error| Error::TraceFormat(e.to_string());
    let json = |e: serde_json::Error| Error::TraceFormat(e.to_string());
    serde_json::to_writer(&mut writer, &header).map_err(json)?;
    writer.write_all(b"\n").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(json)?;
        writer.write_all(b"\n").map_err(io)?;
    }
    writer.flush().map_err(io)
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>> {
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::TraceFormat("missing header".into()))?
        .map_err(|e| Error::TraceFormat(e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::TraceFormat(format!("header: {e}")))?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(Error::TraceFormat(format!("unsupported trace {} v{}", header.format, header.version)));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::TraceFormat(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::TraceFormat(format!("record {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn export_trace(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
    write_trace(records, BufWriter::new(file))
}

pub fn import_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.into(), source })?;
    read_trace(BufReader::new(file))
}
