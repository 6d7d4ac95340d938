use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::schema::MetricSchema;

use super::{CampaignError, CampaignRecord};

const MAGIC: &str = "# betrun-campaign v1";

/// First line of a record file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub fingerprint: String,
    pub schema: MetricSchema,
}

impl RecordHeader {
    pub fn encode(&self) -> String {
        format!("{MAGIC} fingerprint={} schema={}", self.fingerprint, self.schema.encode())
    }

    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.strip_prefix(MAGIC)?;
        let mut fingerprint = None;
        let mut schema = None;
        for field in rest.split_whitespace() {
            match field.split_once('=')? {
                ("fingerprint", v) => fingerprint = Some(v.to_string()),
                ("schema", v) => schema = MetricSchema::decode(v).ok(),
                _ => return None,
            }
        }
        Some(Self { fingerprint: fingerprint?, schema: schema? })
    }
}

/// Parsed record file. Reading stops at the first line that is not a
/// complete record; `dropped_lines` counts what was skipped from there on.
#[derive(Debug, Clone)]
pub struct RecordFile {
    pub header: RecordHeader,
    pub records: Vec<CampaignRecord>,
    pub dropped_lines: usize,
    /// Byte length of the header and the valid records.
    valid_len: u64,
}

impl RecordFile {
    pub fn parse(text: &str) -> Result<Self, CampaignError> {
        let mut lines = text.split_inclusive('\n');
        let first = lines.next().unwrap_or("");
        let header = first
            .strip_suffix('\n')
            .and_then(RecordHeader::parse)
            .ok_or_else(|| CampaignError::BadRecordFile("missing or malformed header".into()))?;
        let mut valid_len = first.len() as u64;
        let mut records = Vec::new();
        let mut dropped_lines = 0;
        for line in lines {
            if dropped_lines > 0 {
                dropped_lines += 1;
                continue;
            }
            match line.strip_suffix('\n').and_then(|l| serde_json::from_str::<CampaignRecord>(l).ok()) {
                Some(r) => {
                    valid_len += line.len() as u64;
                    records.push(r);
                }
                None => dropped_lines = 1,
            }
        }
        Ok(Self { header, records, dropped_lines, valid_len })
    }

    pub fn read(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(|e| CampaignError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Append-only writer for a record file, plus its wall-clock sidecar.
pub struct RecordSink {
    file: File,
    timing: File,
}

pub fn timing_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".timing");
    PathBuf::from(name)
}

impl RecordSink {
    /// Opens `path` for a campaign with `header`.
    ///
    /// An existing file must carry the same header; it is cut back to its
    /// first `keep` records so that writing continues right after them.
    pub fn open(path: &Path, header: &RecordHeader, existing: Option<(&RecordFile, usize)>) -> Result<Self, CampaignError> {
        let io_err = |e: io::Error| CampaignError::Io(format!("{}: {e}", path.display()));
        let file = match existing {
            Some((existing, keep)) => {
                let mut len = existing.valid_len;
                if keep < existing.records.len() {
                    len = existing.header.encode().len() as u64 + 1;
                    for r in &existing.records[..keep] {
                        len += r.to_line().len() as u64 + 1;
                    }
                }
                let f = OpenOptions::new().write(true).open(path).map_err(io_err)?;
                f.set_len(len).map_err(io_err)?;
                drop(f);
                OpenOptions::new().append(true).open(path).map_err(io_err)?
            }
            None => {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(io_err)?;
                }
                let mut f = File::create(path).map_err(io_err)?;
                writeln!(f, "{}", header.encode()).map_err(io_err)?;
                f
            }
        };
        let tp = timing_path(path);
        let timing = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&tp)
            .map_err(|e| CampaignError::Io(format!("{}: {e}", tp.display())))?;
        Ok(Self { file, timing })
    }

    pub fn append(&mut self, record: &CampaignRecord, wall_ms: u64) -> Result<(), CampaignError> {
        let io_err = |e: io::Error| CampaignError::Io(e.to_string());
        writeln!(self.file, "{}", record.to_line()).map_err(io_err)?;
        self.file.flush().map_err(io_err)?;
        let line = serde_json::json!({
            "subject": record.subject,
            "strategy": record.strategy,
            "repetition": record.repetition,
            "wall_ms": wall_ms,
        });
        writeln!(self.timing, "{line}").map_err(io_err)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = RecordHeader { fingerprint: "00ff".into(), schema: crate::surrogate::surrogate_schema() };
        assert_eq!(RecordHeader::parse(&h.encode()), Some(h));
        assert_eq!(RecordHeader::parse("# something else"), None);
    }

    #[test]
    fn rejects_headerless_text() {
        assert!(RecordFile::parse("").is_err());
        assert!(RecordFile::parse("{\"subject\":1}\n").is_err());
    }
}
