//! Line-oriented checkpoint files.
//!
//! ```text
//! # subject=mvc-00 seed=42 schema=fitness_score:lower,coverage:higher
//! 100,12.5,0,coverage=80;solution_size=7
//! 200,9,0,coverage=95;solution_size=6
//! ```
//!
//! Each record is `elapsed_ms,score,error_count,<name>=<value>;...`. Numbers
//! are written with Rust's shortest round-trip formatting, so files are
//! 7-bit clean and locale independent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::schema::{is_valid_metric_name, MetricSchema};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub elapsed_ms: u64,
    pub score: f64,
    pub error_count: u32,
    pub metrics: BTreeMap<String, f64>,
}

impl CheckpointRecord {
    pub fn encode(&self) -> String {
        let mut line = format!("{},{},{},", self.elapsed_ms, self.score, self.error_count);
        for (i, (name, value)) in self.metrics.iter().enumerate() {
            if i > 0 {
                line.push(';');
            }
            let _ = write!(line, "{name}={value}");
        }
        line
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.splitn(4, ',');
        let elapsed_ms = parts.next()?.parse().ok()?;
        let score: f64 = parts.next()?.parse().ok()?;
        let error_count = parts.next()?.parse().ok()?;
        let tail = parts.next()?;
        if !score.is_finite() || score < 0.0 {
            return None;
        }
        let mut metrics = BTreeMap::new();
        for pair in tail.split(';').filter(|p| !p.is_empty()) {
            let (name, value) = pair.split_once('=')?;
            let value: f64 = value.parse().ok()?;
            if !is_valid_metric_name(name) || !value.is_finite() {
                return None;
            }
            metrics.insert(name.to_string(), value);
        }
        Some(Self { elapsed_ms, score, error_count, metrics })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub subject: String,
    pub seed: u64,
    pub schema: MetricSchema,
}

impl CheckpointHeader {
    pub fn encode(&self) -> String {
        format!("# subject={} seed={} schema={}", self.subject, self.seed, self.schema.encode())
    }

    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?.trim();
        let (mut subject, mut seed, mut schema) = (None, None, None);
        for field in body.split_whitespace() {
            let (k, v) = field.split_once('=')?;
            match k {
                "subject" => subject = Some(v.to_string()),
                "seed" => seed = v.parse().ok(),
                "schema" => schema = MetricSchema::decode(v).ok(),
                _ => {}
            }
        }
        Some(Self { subject: subject?, seed: seed?, schema: schema? })
    }
}

/// Single-writer appender used by instances.
pub struct CheckpointWriter {
    out: BufWriter<File>,
}

impl CheckpointWriter {
    pub fn create(path: &Path, header: &CheckpointHeader) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", header.encode())?;
        out.flush()?;
        Ok(Self { out })
    }

    /// Appends and flushes one record so a reader sees whole lines only.
    pub fn append(&mut self, record: &CheckpointRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.encode())?;
        self.out.flush()
    }
}

/// Parsed contents of one checkpoint file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckpointStream {
    pub header: Option<CheckpointHeader>,
    pub records: Vec<CheckpointRecord>,
    /// An unterminated or unparsable final line was dropped.
    pub dropped_trailing: bool,
    /// A line other than the last was unparsable, or elapsed values went backwards.
    pub corrupt: bool,
}

impl CheckpointStream {
    pub fn parse(text: &str) -> Self {
        let mut stream = CheckpointStream::default();
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let last = lines.len().saturating_sub(1);
        for (i, raw) in lines.iter().enumerate() {
            let terminated = raw.ends_with('\n');
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with('#') {
                if stream.header.is_none() && terminated {
                    stream.header = CheckpointHeader::parse(line);
                }
                continue;
            }
            match CheckpointRecord::parse(line).filter(|_| terminated) {
                Some(rec) => {
                    if stream.records.last().is_some_and(|prev| prev.elapsed_ms > rec.elapsed_ms) {
                        stream.corrupt = true;
                    }
                    stream.records.push(rec);
                }
                None if i == last => stream.dropped_trailing = true,
                None => stream.corrupt = true,
            }
        }
        stream
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::parse(&String::from_utf8_lossy(&bytes)))
    }

    /// Last record with `elapsed <= cutoff`, or the last record when `cutoff` is `None`.
    pub fn at_cutoff(&self, cutoff: Option<u64>) -> Option<&CheckpointRecord> {
        match cutoff {
            None => self.records.last(),
            Some(d) => self.records.iter().rev().find(|r| r.elapsed_ms <= d),
        }
    }

    /// Sum of error counts over the records up to `cutoff`.
    pub fn errors_until(&self, cutoff: Option<u64>) -> u32 {
        self.records
            .iter()
            .filter(|r| cutoff.is_none_or(|d| r.elapsed_ms <= d))
            .map(|r| r.error_count)
            .max()
            .unwrap_or(0)
    }
}
