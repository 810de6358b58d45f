use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{AnnotationRecord, EventChain, EventRecord, EventType, CHAIN_LEN};
use crate::error::{Error, Result};

/// A record type persisted one JSON object per line.
pub trait Record: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn validate(&self) -> Result<()>;
}

impl Record for EventRecord {
    const KIND: &'static str = "event";

    fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::validation("text", "empty"));
        }
        if EventType::find(&self.event_type).is_none() {
            return Err(Error::validation(
                "event_type",
                format!("{:?} is not a catalog event type", self.event_type),
            ));
        }
        Ok(())
    }
}

impl Record for EventChain {
    const KIND: &'static str = "chain";

    fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("id", "empty"));
        }
        if self.sentences.len() != CHAIN_LEN {
            return Err(Error::validation(
                "sentences",
                format!("expected {CHAIN_LEN} sentences, got {}", self.sentences.len()),
            ));
        }
        if let Some(i) = self.sentences.iter().position(|s| s.trim().is_empty()) {
            return Err(Error::validation("sentences", format!("sentence {} is empty", i + 1)));
        }
        Ok(())
    }
}

impl Record for AnnotationRecord {
    const KIND: &'static str = "annotation";

    fn validate(&self) -> Result<()> {
        if self.instance_id.trim().is_empty() {
            return Err(Error::validation("instance_id", "empty"));
        }
        if self.annotator_id.trim().is_empty() {
            return Err(Error::validation("annotator_id", "empty"));
        }
        for (field, value) in self.likert_fields() {
            if let Some(v) = value {
                if !(1..=5).contains(&v) {
                    return Err(Error::validation(field, format!("{v} outside 1..=5")));
                }
            }
        }
        Ok(())
    }
}

/// Serializes a record to its canonical single-line form after validating it.
pub fn to_line<R: Record>(record: &R) -> Result<String> {
    record.validate()?;
    serde_json::to_string(record).map_err(|e| Error::validation("record", e.to_string()))
}

/// Writes records one per line, truncating `path`. Returns the number written.
///
/// Nothing is written if any record fails validation.
pub fn write_records<R: Record>(records: &[R], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let lines = records.iter().map(to_line).collect::<Result<Vec<_>>>()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in &lines {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(lines.len())
}

/// Appends records to `path`, creating it if needed.
pub fn append_records<R: Record>(records: &[R], path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let lines = records.iter().map(to_line).collect::<Result<Vec<_>>>()?;
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in &lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(lines.len())
}

/// Reads and validates every record of `path`, in file order. Blank lines are skipped.
pub fn read_records<R: Record>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: R = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("{} record: {e}", R::KIND),
        })?;
        record.validate().map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field,
                message: format!("{}:{}: {message}", path.display(), i + 1),
            },
            other => other,
        })?;
        records.push(record);
    }
    Ok(records)
}
