//! Append-only JSONL store of annotation records.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{AnnotationRecord, ValidationError};

/// An open journal. The file only ever grows; the in-memory view keeps the
/// latest record per `(sample_id, rater_id)`.
#[derive(Debug)]
pub struct AnnotationJournal {
    path: PathBuf,
    file: File,
    latest: BTreeMap<(String, String), AnnotationRecord>,
    lines: usize,
}

/// Records in file order. Blank lines are skipped.
pub fn read_journal(path: &Path) -> Result<Vec<AnnotationRecord>, ValidationError> {
    let text = fs::read_to_string(path).map_err(|source| ValidationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| ValidationError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        record.validate().map_err(|message| ValidationError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(record);
    }
    Ok(out)
}

impl AnnotationJournal {
    /// Open or create the journal at `path`.
    pub fn open(path: &Path) -> Result<Self, ValidationError> {
        let existing = if path.exists() { read_journal(path)? } else { Vec::new() };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ValidationError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let mut journal = AnnotationJournal {
            path: path.to_path_buf(),
            file,
            latest: BTreeMap::new(),
            lines: 0,
        };
        for r in existing {
            journal.remember(r);
        }
        Ok(journal)
    }

    fn remember(&mut self, r: AnnotationRecord) {
        self.lines += 1;
        let key = (r.sample_id.clone(), r.rater_id.clone());
        if let Some(old) = self.latest.insert(key, r) {
            tracing::info!(
                sample_id = %old.sample_id,
                rater_id = %old.rater_id,
                replaced_at = %old.created_at,
                "annotation replaced"
            );
        }
    }

    /// Validate and append one record, then make it the current judgment.
    pub fn append(&mut self, record: AnnotationRecord) -> Result<(), ValidationError> {
        record.validate().map_err(ValidationError::InvalidRecord)?;
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| ValidationError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.remember(record);
        Ok(())
    }

    /// Current records, ordered by sample id then rater id.
    pub fn records(&self) -> Vec<AnnotationRecord> {
        let mut v: Vec<_> = self.latest.values().cloned().collect();
        v.sort_by(|a, b| (&a.sample_id, &a.rater_id).cmp(&(&b.sample_id, &b.rater_id)));
        v
    }

    pub fn get(&self, sample_id: &str, rater_id: &str) -> Option<&AnnotationRecord> {
        self.latest.get(&(sample_id.to_string(), rater_id.to_string()))
    }

    /// Number of lines written, including superseded ones.
    pub fn line_count(&self) -> usize {
        self.lines
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn rec(sample: &str, rater: &str, quality: u8) -> AnnotationRecord {
        AnnotationRecord {
            sample_id: sample.into(),
            rater_id: rater.into(),
            understandable: true,
            quality,
            created_at: Utc::now(),
        }
    }

    #[test]
    fn reopen_keeps_last_record_per_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        {
            let mut j = AnnotationJournal::open(&path).unwrap();
            j.append(rec("s1", "a", 2)).unwrap();
            j.append(rec("s1", "b", 3)).unwrap();
            j.append(rec("s1", "a", 4)).unwrap();
        }
        let j = AnnotationJournal::open(&path).unwrap();
        assert_eq!(j.line_count(), 3);
        assert_eq!(j.records().len(), 2);
        assert_eq!(j.get("s1", "a").unwrap().quality, 4);
        assert_eq!(read_journal(&path).unwrap().len(), 3);
    }

    #[test]
    fn invalid_record_is_not_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let mut j = AnnotationJournal::open(&path).unwrap();
        assert!(j.append(rec("s1", "a", 6)).is_err());
        assert_eq!(fs::read_to_string(&path).unwrap(), "");
    }
}
