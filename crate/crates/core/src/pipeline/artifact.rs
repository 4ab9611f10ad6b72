//! Versioned JSONL and CSV artifacts.
//!
//! JSONL artifacts start with a header line
//! `{"schema_version":1,"kind":...,"config":...}`; CSV logs start with the
//! same header as a `# ` comment line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub schema_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
}

impl ArtifactHeader {
    pub fn new(kind: &str, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            config,
        }
    }

    fn check(self, kind: &str, path: &Path) -> Result<Self, PipelineError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PipelineError::Data(format!(
                "{}: unsupported schema version {}",
                path.display(),
                self.schema_version
            )));
        }
        if self.kind != kind {
            return Err(PipelineError::Data(format!(
                "{}: expected a `{kind}` artifact, found `{}`",
                path.display(),
                self.kind
            )));
        }
        Ok(self)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(format!("{}: {e}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &ArtifactHeader, records: &[T]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = |v: String| writeln!(w, "{v}").map_err(|e| io_err(path, e));
    line(serde_json::to_string(header).expect("header serializes"))?;
    for r in records {
        line(serde_json::to_string(r).map_err(|e| io_err(path, e))?)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(ArtifactHeader, Vec<T>), PipelineError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| io_err(path, "empty artifact"))?
        .map_err(|e| io_err(path, e))?;
    let header: ArtifactHeader = serde_json::from_str(&first).map_err(|e| io_err(path, format!("bad header: {e}")))?;
    let header = header.check(kind, path)?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", i + 2)))?);
    }
    Ok((header, records))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, header: &ArtifactHeader, rows: &[T]) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# {}", serde_json::to_string(header).expect("header serializes")).map_err(|e| io_err(path, e))?;
    let mut csv = csv::Writer::from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| io_err(path, e))?;
    }
    csv.flush().map_err(|e| io_err(path, e))
}

/// Reads a CSV log written by [`write_csv`].
pub fn read_csv<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(ArtifactHeader, Vec<T>), PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (first, rest) = text.split_once('\n').ok_or_else(|| io_err(path, "empty artifact"))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| io_err(path, "missing header comment"))?;
    let header: ArtifactHeader = serde_json::from_str(json).map_err(|e| io_err(path, format!("bad header: {e}")))?;
    let header = header.check(kind, path)?;
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(rest.as_bytes()).deserialize() {
        rows.push(r.map_err(|e| io_err(path, e))?);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        step: usize,
        loss: f64,
    }

    #[test]
    fn jsonl_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        let h = ArtifactHeader::new("rows", serde_json::json!({"k": 1}));
        let rows = vec![Row { step: 0, loss: 0.5 }, Row { step: 1, loss: 0.25 }];
        write_jsonl(&p, &h, &rows).unwrap();
        let (h2, back): (_, Vec<Row>) = read_jsonl(&p, "rows").unwrap();
        assert_eq!((h2, back), (h, rows));
        assert!(read_jsonl::<Row>(&p, "other").is_err());

        let text = std::fs::read_to_string(&p)
            .unwrap()
            .replace("\"schema_version\":1", "\"schema_version\":2");
        std::fs::write(&p, text).unwrap();
        let err = read_jsonl::<Row>(&p, "rows").unwrap_err();
        assert!(err.to_string().contains("schema version 2"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let h = ArtifactHeader::new("curve", serde_json::Value::Null);
        let rows = vec![Row { step: 0, loss: 0.5 }];
        write_csv(&p, &h, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# {\"schema_version\":1"));
        assert!(text.contains("\nstep,loss\n0,0.5\n"));
        let (_, back): (_, Vec<Row>) = read_csv(&p, "curve").unwrap();
        assert_eq!(back, rows);
    }
}
