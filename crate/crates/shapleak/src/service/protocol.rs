//! Wire protocol: one JSON object per line over TCP, one reply line per
//! request line.
//!
//! Request:  `{"id": "...", "key": "...", "op": "explain", "features": [...]}`
//! Response: `{"id": "...", "prediction": [...], "target_class": 0,
//!             "shapley": [{"index": 0, "value": 0.1}, ...],
//!             "method": {"type": "sampled", "nu": 50}, "remaining": 99}`
//! Error:    `{"id": "...", "error": "BAD_REQUEST" | "BUDGET_EXHAUSTED" |
//!             "INTERNAL", "detail": "..."}`

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub key: String,
    pub op: String,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WireShapleyEntry {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMethod {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<u32>,
}

impl From<crate::explain::ExplainMethod> for WireMethod {
    fn from(m: crate::explain::ExplainMethod) -> Self {
        match m {
            crate::explain::ExplainMethod::Exact => WireMethod {
                kind: "exact".into(),
                nu: None,
            },
            crate::explain::ExplainMethod::Sampled { nu } => WireMethod {
                kind: "sampled".into(),
                nu: Some(nu),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: String,
    pub prediction: Vec<f64>,
    pub target_class: usize,
    pub shapley: Vec<WireShapleyEntry>,
    pub method: WireMethod,
    pub remaining: u64,
}

pub const ERR_BAD_REQUEST: &str = "BAD_REQUEST";
pub const ERR_BUDGET_EXHAUSTED: &str = "BUDGET_EXHAUSTED";
pub const ERR_INTERNAL: &str = "INTERNAL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub id: String,
    pub error: String,
    pub detail: String,
}

/// Either reply line. Untagged: an error line carries `error`, a response
/// line carries `prediction`, so the variants never overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireReply {
    Error(WireError),
    Response(WireResponse),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_lines_distinguish_error_from_response() {
        let err = r#"{"id":"a","error":"BUDGET_EXHAUSTED","detail":"key k"}"#;
        match serde_json::from_str::<WireReply>(err).unwrap() {
            WireReply::Error(e) => assert_eq!(e.error, ERR_BUDGET_EXHAUSTED),
            other => panic!("expected error, got {other:?}"),
        }
        let ok = r#"{"id":"a","prediction":[0.2,0.8],"target_class":1,
                     "shapley":[{"index":0,"value":0.05}],
                     "method":{"type":"sampled","nu":50},"remaining":3}"#;
        match serde_json::from_str::<WireReply>(ok).unwrap() {
            WireReply::Response(r) => {
                assert_eq!(r.remaining, 3);
                assert_eq!(r.method.nu, Some(50));
            }
            other => panic!("expected response, got {other:?}"),
        }
    }

    #[test]
    fn exact_method_omits_nu() {
        let m: WireMethod = crate::explain::ExplainMethod::Exact.into();
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"type":"exact"}"#);
    }
}
