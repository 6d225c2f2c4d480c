//! Explanation persistence: one JSON record per line, one line per
//! (sample, class) pair.

use super::{ExplainError, Explanation};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    /// Which sample this explains, e.g. `val:12` or a request id.
    pub sample_id: String,
    #[serde(flatten)]
    pub explanation: Explanation,
}

pub fn write_explanations(
    path: impl AsRef<Path>,
    records: &[ExplanationRecord],
) -> Result<(), ExplainError> {
    let mut file = std::fs::File::create(path.as_ref())
        .map_err(|e| ExplainError::Io(format!("cannot create file: {e}")))?;
    for record in records {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(file, "{line}")
            .map_err(|e| ExplainError::Io(format!("write failed: {e}")))?;
    }
    Ok(())
}

pub fn read_explanations(path: impl AsRef<Path>) -> Result<Vec<ExplanationRecord>, ExplainError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| ExplainError::Io(format!("cannot open file: {e}")))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line =
            line.map_err(|e| ExplainError::Io(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExplanationRecord = serde_json::from_str(&line).map_err(|e| {
            ExplainError::Io(format!("bad record on line {}: {e}", lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::ExplainMethod;

    #[test]
    fn roundtrip_preserves_records() {
        let records: Vec<ExplanationRecord> = (0..3)
            .map(|i| ExplanationRecord {
                sample_id: format!("val:{i}"),
                explanation: Explanation {
                    shapley: vec![0.1 * f64::from(i), -0.2, f64::from(i)],
                    target_class: 1,
                    method: ExplainMethod::Sampled { nu: 50 },
                    reference_id: "train:7".into(),
                    seed: Some(42),
                },
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("explanations.ndjson");
        write_explanations(&path, &records).unwrap();
        assert_eq!(read_explanations(&path).unwrap(), records);
    }
}
