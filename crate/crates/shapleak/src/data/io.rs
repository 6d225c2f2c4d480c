//! CSV ingestion and dataset persistence.
//!
//! CSV input: comma-separated, UTF-8, header row required, `.` decimal
//! point. All non-label columns must be numeric; the label column must hold
//! non-negative integers. Dataset files are self-describing JSON (see
//! [`DatasetFile`]).

use super::{DataError, Dataset, NormRecord};
use super::synthetic::SynthMeta;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Load a numeric CSV with a header row. `label_column` names the class
/// column; every other column becomes a feature, in header order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::Other, e.to_string()),
            },
            _ => DataError::Malformed(e.to_string()),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Malformed(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_owned()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(DataError::Empty("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Malformed(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(DataError::Malformed(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let mut feat = Vec::with_capacity(feature_names.len());
        for (col, value) in record.iter().enumerate() {
            if col == label_idx {
                let l: i64 = value.parse().map_err(|_| DataError::BadLabel {
                    row,
                    detail: format!("{value:?} is not an integer class"),
                })?;
                if l < 0 {
                    return Err(DataError::BadLabel {
                        row,
                        detail: format!("negative class {l}"),
                    });
                }
                labels.push(l as usize);
            } else {
                let v: f64 = value.parse().map_err(|_| DataError::NonNumeric {
                    row,
                    column: headers[col].clone(),
                    value: value.to_owned(),
                })?;
                feat.push(v);
            }
        }
        features.push(feat);
    }
    if features.is_empty() {
        return Err(DataError::Empty(format!("{} has no data rows", path.display())));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(features, labels, feature_names, n_classes)
}

/// On-disk dataset representation: JSON with a format tag and version so
/// files identify themselves.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub dataset: Dataset,
    /// Present when the dataset was normalized; inverts the map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormRecord>,
    /// Present for synthetic datasets; records the generation recipe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthMeta>,
}

pub const DATASET_FORMAT: &str = "shapleak.dataset";
pub const DATASET_VERSION: u32 = 1;

impl DatasetFile {
    pub fn new(dataset: Dataset) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            dataset,
            normalization: None,
            synth: None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let json = serde_json::to_string_pretty(self).expect("dataset serializes");
        std::fs::write(path.as_ref(), json).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        let file: DatasetFile =
            serde_json::from_str(&text).map_err(|e| DataError::Malformed(e.to_string()))?;
        if file.format != DATASET_FORMAT {
            return Err(DataError::Malformed(format!(
                "expected format {DATASET_FORMAT:?}, found {:?}",
                file.format
            )));
        }
        if file.version != DATASET_VERSION {
            return Err(DataError::Malformed(format!(
                "unsupported dataset version {}",
                file.version
            )));
        }
        Dataset::new(
            file.dataset.features.clone(),
            file.dataset.labels.clone(),
            file.dataset.feature_names.clone(),
            file.dataset.n_classes,
        )?;
        Ok(file)
    }
}
