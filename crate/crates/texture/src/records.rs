//! Newline-delimited JSON records.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use texture_core::RawRecord;

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Parsed records plus the 1-based source line of each.
#[derive(Clone, Debug, Default)]
pub struct Records {
    pub records: Vec<RawRecord>,
    pub lines: Vec<usize>,
}

impl Records {
    pub fn line_of(&self, record: usize) -> usize {
        self.lines.get(record).copied().unwrap_or(0)
    }
}

/// Reads one JSON object per line. Blank lines are skipped.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Records, RecordsError> {
    let mut out = Records::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| RecordsError::Malformed {
            line: i + 1,
            reason: if e.is_data() {
                "expected a JSON object of attribute values".into()
            } else {
                e.to_string()
            },
        })?;
        out.records.push(record);
        out.lines.push(i + 1);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Records, RecordsError> {
    parse_records(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_counted_across_blanks() {
        let r = parse_records("{\"a\": 1}\n\n  \n{\"a\": 2}\n".as_bytes()).unwrap();
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.lines, vec![1, 4]);
    }

    #[test]
    fn malformed_line_is_located() {
        let err = parse_records("{\"a\": 1}\n{\"a\": \n".as_bytes()).unwrap_err();
        assert!(matches!(err, RecordsError::Malformed { line: 2, .. }), "{err}");
        let err = parse_records("\n[1, 2]\n".as_bytes()).unwrap_err();
        assert!(matches!(err, RecordsError::Malformed { line: 2, .. }), "{err}");
    }
}
