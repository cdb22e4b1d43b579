//! Dataset ingestion: line-delimited JSON records with `id`, `question`,
//! and gold `answer` fields.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cascade_core::Query;

/// One benchmark item: a unique id, the question text, and its gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
}

impl DatasetRecord {
    pub fn to_query(&self) -> Query {
        Query::new(self.id.clone(), self.question.clone()).with_gold(self.answer.clone())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id '{id}'")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
}

/// Parse a dataset file, preserving input order. Duplicate ids, malformed
/// lines, empty questions, and files with no records at all are rejected.
pub fn ingest_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(io_err)?;
        if text.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&text).map_err(|e| DatasetError::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if record.question.trim().is_empty() {
            return Err(DatasetError::Format {
                path: path.to_path_buf(),
                line: line_no,
                message: "question is empty".into(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: record.id,
            });
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(DatasetError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: "file contains no records".into(),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let mut f = File::create(&path).unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        (dir, path)
    }

    #[test]
    fn well_formed_file_preserves_order() {
        let (_dir, path) = write_lines(&[
            r#"{"id": "a", "question": "q1", "answer": "1"}"#,
            r#"{"id": "b", "question": "q2", "answer": "2"}"#,
            r#"{"id": "c", "question": "q3", "answer": "3"}"#,
        ]);
        let records = ingest_dataset(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].id, "a");
        assert_eq!(records[2].question, "q3");
    }

    #[test]
    fn missing_question_reports_line() {
        let (_dir, path) = write_lines(&[
            r#"{"id": "a", "question": "q1", "answer": "1"}"#,
            r#"{"id": "b", "answer": "2"}"#,
        ]);
        match ingest_dataset(&path).unwrap_err() {
            DatasetError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let (_dir, path) = write_lines(&[
            r#"{"id": "a", "question": "q1", "answer": "1"}"#,
            r#"{"id": "a", "question": "q2", "answer": "2"}"#,
        ]);
        match ingest_dataset(&path).unwrap_err() {
            DatasetError::DuplicateId { id, line, .. } => {
                assert_eq!(id, "a");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn empty_file_is_a_format_error() {
        let (_dir, path) = write_lines(&[]);
        assert!(matches!(
            ingest_dataset(&path).unwrap_err(),
            DatasetError::Format { .. }
        ));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(
            ingest_dataset("/nonexistent/nowhere.jsonl").unwrap_err(),
            DatasetError::Io { .. }
        ));
    }
}
