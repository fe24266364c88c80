//! Trace files: one update per line, `t id x y vx vy`, space-separated.
//!
//! Timestamps are written in seconds with six decimals and parsed exactly;
//! coordinates use the shortest decimal form that parses back to the same
//! `f64`, so a trace round-trips bit for bit. Every line, including the
//! last, ends with a newline, which makes a truncated file detectable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Workload, WorkloadConfig, WorkloadError};
use crate::schooling::UpdateMessage;
use crate::types::{Timestamp, Vec2};

pub fn format_line(m: &UpdateMessage) -> String {
    format!("{} {} {} {} {} {}\n", m.t, m.id, m.loc.x, m.loc.y, m.vel.x, m.vel.y)
}

pub fn parse_line(line: &str, number: usize) -> Result<UpdateMessage, WorkloadError> {
    let bad = |message: String| WorkloadError::Malformed { line: number, message };
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 6 {
        return Err(bad(format!("expected 6 fields, found {}", fields.len())));
    }
    let t: Timestamp = fields[0].parse().map_err(|e| bad(format!("timestamp: {e}")))?;
    let id = fields[1].parse().map_err(|e| bad(format!("id: {e}")))?;
    let mut v = [0.0f64; 4];
    for (k, f) in fields[2..].iter().enumerate() {
        v[k] = f.parse().map_err(|e| bad(format!("field {}: {e}", k + 3)))?;
        if !v[k].is_finite() {
            return Err(bad(format!("field {} is not finite", k + 3)));
        }
    }
    Ok(UpdateMessage::new(id, Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]), t))
}

/// Writes messages in trace format, returning how many were written.
pub fn write_trace(out: impl Write, msgs: impl IntoIterator<Item = UpdateMessage>) -> Result<usize, WorkloadError> {
    let mut w = BufWriter::new(out);
    let mut n = 0;
    for m in msgs {
        w.write_all(format_line(&m).as_bytes())?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Generates the configured workload into a trace file.
pub fn record_trace(cfg: &WorkloadConfig, path: &Path) -> Result<usize, WorkloadError> {
    write_trace(File::create(path)?, Workload::new(cfg.clone())?)
}

/// Streaming trace parser.
pub struct TraceReader<R> {
    inner: R,
    line: usize,
    buf: String,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, line: 0, buf: String::new(), failed: false }
    }
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, WorkloadError> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<UpdateMessage, WorkloadError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.buf.clear();
        self.line += 1;
        let result = match self.inner.read_line(&mut self.buf) {
            Ok(0) => return None,
            Ok(_) if !self.buf.ends_with('\n') => {
                Err(WorkloadError::Malformed { line: self.line, message: "truncated line (no newline)".into() })
            }
            Ok(_) => parse_line(&self.buf, self.line),
            Err(e) => Err(e.into()),
        };
        self.failed = result.is_err();
        Some(result)
    }
}

/// Reads a whole trace file.
pub fn read_trace(path: &Path) -> Result<Vec<UpdateMessage>, WorkloadError> {
    TraceReader::open(path)?.collect()
}
