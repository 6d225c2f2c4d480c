//! Local pay-per-query MLaaS simulator: serves prediction plus Shapley
//! explanation over line-delimited JSON on TCP, with per-key query budgets
//! and request-id replay. [`client`] is the matching client the attacks
//! drive.

mod client;
mod engine;
mod protocol;
mod server;

pub use client::{BatchError, ClientError, ExplainClient, ServedExplanation};
pub use engine::{
    Answer, EngineError, ExplainEngine, MethodSpec, ResolvedDefense, TargetClassPolicy,
    CALIBRATION_BATCH,
};
pub use protocol::{
    WireError, WireMethod, WireReply, WireRequest, WireResponse, WireShapleyEntry,
    ERR_BAD_REQUEST, ERR_BUDGET_EXHAUSTED, ERR_INTERNAL,
};
pub use server::{serve, QueryRecord, ServerHandle, ServiceError};

use crate::defense::DefenseConfig;
use crate::explain::ReferenceSample;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

/// Anything the attacks can pull explanations from: the TCP client or an
/// in-process engine with the same budget semantics.
pub trait ExplainOracle {
    fn explain(&mut self, features: &[f64]) -> Result<ServedExplanation, ClientError>;

    /// Explain every row in order; stop at the first failure and report
    /// the completed prefix.
    fn explain_batch(&mut self, rows: &[Vec<f64>]) -> Result<Vec<ServedExplanation>, BatchError> {
        let mut completed = Vec::with_capacity(rows.len());
        for row in rows {
            match self.explain(row) {
                Ok(served) => completed.push(served),
                Err(cause) => return Err(BatchError { completed, cause }),
            }
        }
        Ok(completed)
    }
}

impl ExplainOracle for ExplainClient {
    fn explain(&mut self, features: &[f64]) -> Result<ServedExplanation, ClientError> {
        self.query_explain(features)
    }
}

/// Drives an [`ExplainEngine`] directly, mirroring the server's request-id
/// sequence and budget behavior. With the same engine settings and id
/// prefix, answers are bit-identical to a TCP round trip.
pub struct InProcessOracle {
    engine: Arc<ExplainEngine>,
    id_prefix: String,
    counter: u64,
    remaining: u64,
}

impl InProcessOracle {
    pub fn new(engine: Arc<ExplainEngine>, id_prefix: impl Into<String>, budget: u64) -> Self {
        Self {
            engine,
            id_prefix: id_prefix.into(),
            counter: 0,
            remaining: budget,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }
}

impl ExplainOracle for InProcessOracle {
    fn explain(&mut self, features: &[f64]) -> Result<ServedExplanation, ClientError> {
        if self.remaining == 0 {
            return Err(ClientError::BudgetExhausted(
                "query budget exhausted for this key".into(),
            ));
        }
        let id = format!("{}-{}", self.id_prefix, self.counter);
        self.counter += 1;
        let answer = self.engine.answer(&id, features).map_err(|e| match e {
            EngineError::BadRequest(d) => ClientError::Rejected {
                code: ERR_BAD_REQUEST.into(),
                detail: d,
            },
            EngineError::Internal(d) => ClientError::Rejected {
                code: ERR_INTERNAL.into(),
                detail: d,
            },
        })?;
        self.remaining -= 1;
        Ok(ServedExplanation {
            request_id: id,
            prediction: answer.prediction,
            target_class: answer.target_class,
            released: answer.released,
            method: self.engine.method().as_explain_method(),
            remaining: self.remaining,
        })
    }
}

/// Environment variable that overrides the configured listen address.
pub const LISTEN_ENV: &str = "SHAPLEAK_LISTEN";

/// On-disk service configuration (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Path of the model file to serve.
    pub model_path: String,
    pub method: MethodSpec,
    /// The reference sample; values must match the model width.
    pub reference_values: Vec<f64>,
    #[serde(default = "default_reference_id")]
    pub reference_id: String,
    pub target_class: TargetClassPolicy,
    #[serde(default)]
    pub defense: DefenseConfig,
    /// Query budget per api key.
    pub budgets: HashMap<String, u64>,
    /// Listen address, overridable with `SHAPLEAK_LISTEN`.
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Seed for the startup defense-calibration batch.
    #[serde(default)]
    pub calibration_seed: u64,
}

fn default_listen() -> String {
    "127.0.0.1:7878".to_owned()
}

fn default_reference_id() -> String {
    "config:reference".to_owned()
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            ServiceError::BadConfig(format!("cannot read {}: {e}", path.as_ref().display()))
        })?;
        toml::from_str(&text).map_err(|e| ServiceError::BadConfig(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ServiceError> {
        let text = toml::to_string_pretty(self).expect("config serializes");
        std::fs::write(path.as_ref(), text).map_err(|e| {
            ServiceError::BadConfig(format!("cannot write {}: {e}", path.as_ref().display()))
        })
    }

    /// Listen address after the environment override.
    pub fn effective_listen(&self) -> String {
        std::env::var(LISTEN_ENV).unwrap_or_else(|_| self.listen.clone())
    }

    /// Load the model and start serving.
    pub fn start(&self) -> Result<ServerHandle, ServiceError> {
        let model = crate::models::load_model(&self.model_path)
            .map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        let engine = ExplainEngine::new(
            Arc::new(model),
            self.method,
            ReferenceSample {
                values: self.reference_values.clone(),
                id: self.reference_id.clone(),
            },
            self.target_class,
            &self.defense,
            self.calibration_seed,
        )
        .map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        serve(engine, self.budgets.clone(), &self.effective_listen())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = ServiceConfig {
            model_path: "model.json".into(),
            method: MethodSpec::Sampled { nu: 50, seed: 7 },
            reference_values: vec![0.1, 0.2],
            reference_id: "train:3".into(),
            target_class: TargetClassPolicy::TopPredicted,
            defense: DefenseConfig {
                quantize_levels: Some(10),
                ..DefenseConfig::default()
            },
            budgets: HashMap::from([("alice".to_owned(), 100)]),
            listen: "127.0.0.1:0".into(),
            calibration_seed: 3,
        };
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ServiceConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
