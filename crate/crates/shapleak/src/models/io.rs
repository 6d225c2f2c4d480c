//! Model persistence: a self-describing JSON file with a format tag,
//! version, and the kind-tagged payload. Loading is bit-exact: a saved
//! model predicts identically after a round trip.

use super::nn::FeedForward;
use super::{Model, ModelKind, TrainMeta};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const MODEL_FORMAT: &str = "shapleak.model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model kind mismatch: file holds {found}, expected {expected}")]
    KindMismatch { expected: String, found: String },
}

/// Everything the model file format can carry. The inverse attack model
/// shares the format under its own kind tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StoredModel {
    Mlp(super::MlpModel),
    RandomForest(super::ForestModel),
    Gbdt(super::GbdtModel),
    Ksvm(super::KsvmModel),
    AttackMlp {
        net: FeedForward,
        train_meta: TrainMeta,
    },
}

impl StoredModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            StoredModel::Mlp(_) => ModelKind::Mlp,
            StoredModel::RandomForest(_) => ModelKind::RandomForest,
            StoredModel::Gbdt(_) => ModelKind::Gbdt,
            StoredModel::Ksvm(_) => ModelKind::Ksvm,
            StoredModel::AttackMlp { .. } => ModelKind::AttackMlp,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: StoredModel,
}

pub(crate) fn save_stored(model: &StoredModel, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&file).expect("model serializes");
    std::fs::write(path.as_ref(), json).map_err(|e| ModelIoError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })
}

pub(crate) fn load_stored(path: impl AsRef<Path>) -> Result<StoredModel, ModelIoError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ModelIoError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    // Header first, so a format or version problem is reported as such
    // rather than as a payload parse failure.
    match value.get("format").and_then(|v| v.as_str()) {
        Some(MODEL_FORMAT) => {}
        other => {
            return Err(ModelIoError::Malformed(format!(
                "expected format {MODEL_FORMAT:?}, found {other:?}"
            )))
        }
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => return Err(ModelIoError::Version(v as u32)),
        None => return Err(ModelIoError::Malformed("missing version".into())),
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| ModelIoError::Malformed(e.to_string()))?;
    Ok(file.model)
}

/// Save a classifier model.
pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
    let stored = match model {
        Model::Mlp(m) => StoredModel::Mlp(m.clone()),
        Model::RandomForest(m) => StoredModel::RandomForest(m.clone()),
        Model::Gbdt(m) => StoredModel::Gbdt(m.clone()),
        Model::Ksvm(m) => StoredModel::Ksvm(m.clone()),
    };
    save_stored(&stored, path)
}

/// Load a classifier model; an attack-model file is a kind mismatch.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelIoError> {
    match load_stored(path)? {
        StoredModel::Mlp(m) => Ok(Model::Mlp(m)),
        StoredModel::RandomForest(m) => Ok(Model::RandomForest(m)),
        StoredModel::Gbdt(m) => Ok(Model::Gbdt(m)),
        StoredModel::Ksvm(m) => Ok(Model::Ksvm(m)),
        other => Err(ModelIoError::KindMismatch {
            expected: "a classifier kind".into(),
            found: other.kind().to_string(),
        }),
    }
}

/// Load a classifier and require a specific kind.
pub fn load_model_of_kind(
    path: impl AsRef<Path>,
    expected: ModelKind,
) -> Result<Model, ModelIoError> {
    let model = load_model(path)?;
    if model.kind() != expected {
        return Err(ModelIoError::KindMismatch {
            expected: expected.to_string(),
            found: model.kind().to_string(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util;
    use crate::models::{train_mlp, train_rf, MlpArch, MlpHyper, Predictor, RfHyper};
    use rand::Rng;

    #[test]
    fn mlp_roundtrip_predicts_identically() {
        let d = test_util::separable_blobs(80, 1);
        let hyper = MlpHyper {
            epochs: 15,
            ..MlpHyper::default()
        };
        let model = Model::Mlp(train_mlp(&d, &MlpArch::standard(2), &hyper, 4).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let mut rng = crate::rng::root(0);
        for _ in 0..100 {
            let x = [rng.gen::<f64>(), rng.gen::<f64>()];
            assert_eq!(model.predict(&x), loaded.predict(&x));
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let d = test_util::separable_blobs(40, 1);
        let model = Model::RandomForest(
            train_rf(
                &d,
                &RfHyper {
                    n_trees: 3,
                    max_depth: 2,
                },
                0,
            )
            .unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::Malformed(_))
        ));
    }

    #[test]
    fn cross_kind_load_is_a_kind_mismatch() {
        let d = test_util::separable_blobs(40, 1);
        let model = Model::RandomForest(
            train_rf(
                &d,
                &RfHyper {
                    n_trees: 3,
                    max_depth: 2,
                },
                0,
            )
            .unwrap(),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&model, &path).unwrap();
        assert!(matches!(
            load_model_of_kind(&path, ModelKind::Mlp),
            Err(ModelIoError::KindMismatch { .. })
        ));
    }

    #[test]
    fn rejects_future_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            format!("{{\"format\":\"{MODEL_FORMAT}\",\"version\":99,\"kind\":\"mlp\"}}"),
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Version(99))));
    }
}
