//! Line-delimited JSON reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parse one record per non-blank line. Errors carry the 1-based line number:
/// [`Error::JsonLine`] for invalid UTF-8 or JSON, [`Error::Schema`] for a valid
/// object that does not match `T`.
pub fn load_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        let text = std::str::from_utf8(raw).map_err(|e| Error::JsonLine {
            path: path.to_path_buf(),
            line,
            detail: format!("invalid UTF-8: {e}"),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::JsonLine {
            path: path.to_path_buf(),
            line,
            detail: e.to_string(),
        })?;
        if !value.is_object() {
            return Err(Error::JsonLine {
                path: path.to_path_buf(),
                line,
                detail: "expected a JSON object".into(),
            });
        }
        let record = serde_json::from_value(value).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line,
            detail: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::QaRecord;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("x.jsonl");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_and_single_line_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "");
        assert!(load_jsonl::<QaRecord>(&p).unwrap().is_empty());
        let p = write(&dir, "{\"prompt\":\"a\",\"response\":\"b\"}\n");
        let recs: Vec<QaRecord> = load_jsonl(&p).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].template, None);
    }

    #[test]
    fn malformed_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let ok = "{\"prompt\":\"a\",\"response\":\"b\"}";
        let p = write(&dir, &format!("{ok}\n{ok}\n{{\"prompt\": \n{ok}\n"));
        match load_jsonl::<QaRecord>(&p) {
            Err(Error::JsonLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "{\"prompt\":\"a\"}\n");
        match load_jsonl::<QaRecord>(&p) {
            Err(Error::Schema { line, detail, .. }) => {
                assert_eq!(line, 1);
                assert!(detail.contains("response"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let recs = vec![
            QaRecord::new("q1", "a1"),
            QaRecord {
                template: Some("t".into()),
                ..QaRecord::new("q2", "a\n2")
            },
        ];
        write_jsonl(&p, &recs).unwrap();
        assert_eq!(load_jsonl::<QaRecord>(&p).unwrap(), recs);
    }
}
