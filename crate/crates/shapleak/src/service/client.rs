//! Client side of the line protocol. Retries idempotently: a transport
//! failure reconnects and resends the same request id, which the server
//! answers from its replay cache without charging twice.

use super::protocol::*;
use crate::defense::ReleasedExplanation;
use crate::explain::ExplainMethod;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("service rejected request: {code}: {detail}")]
    Rejected { code: String, detail: String },
}

/// A batch that stopped early: the prefix that completed plus the cause.
#[derive(Debug, Error)]
#[error("batch stopped after {} results: {cause}", completed.len())]
pub struct BatchError {
    pub completed: Vec<ServedExplanation>,
    #[source]
    pub cause: ClientError,
}

/// What the service released for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ServedExplanation {
    pub request_id: String,
    pub prediction: Vec<f64>,
    pub target_class: usize,
    pub released: ReleasedExplanation,
    pub method: ExplainMethod,
    pub remaining: u64,
}

pub struct ExplainClient {
    addr: String,
    key: String,
    id_prefix: String,
    counter: u64,
    stream: Option<BufReader<TcpStream>>,
}

impl ExplainClient {
    /// `id_prefix` makes request ids (`{prefix}-{counter}`) unique per
    /// client so replays and budgets behave; two clients replaying each
    /// other's ids would read each other's cached answers.
    pub fn new(addr: impl Into<String>, key: impl Into<String>, id_prefix: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            key: key.into(),
            id_prefix: id_prefix.into(),
            counter: 0,
            stream: None,
        }
    }

    fn connect(&mut self) -> Result<&mut BufReader<TcpStream>, ClientError> {
        if self.stream.is_none() {
            let stream = TcpStream::connect(&self.addr)
                .map_err(|e| ClientError::Transport(format!("connect {}: {e}", self.addr)))?;
            stream
                .set_read_timeout(Some(Duration::from_secs(300)))
                .map_err(|e| ClientError::Transport(e.to_string()))?;
            self.stream = Some(BufReader::new(stream));
        }
        Ok(self.stream.as_mut().expect("just connected"))
    }

    fn send_once(&mut self, request: &WireRequest) -> Result<WireReply, ClientError> {
        let line = serde_json::to_string(request).expect("request serializes");
        let reader = self.connect()?;
        let stream = reader.get_mut();
        stream
            .write_all(line.as_bytes())
            .and_then(|_| stream.write_all(b"\n"))
            .and_then(|_| stream.flush())
            .map_err(|e| ClientError::Transport(format!("send: {e}")))?;
        let mut reply_line = String::new();
        let read = reader
            .read_line(&mut reply_line)
            .map_err(|e| ClientError::Transport(format!("recv: {e}")))?;
        if read == 0 {
            return Err(ClientError::Transport("connection closed".into()));
        }
        serde_json::from_str(&reply_line)
            .map_err(|e| ClientError::Protocol(format!("bad reply line: {e}")))
    }

    /// One explain query with an explicit request id.
    pub fn query_explain_with_id(
        &mut self,
        request_id: &str,
        features: &[f64],
    ) -> Result<ServedExplanation, ClientError> {
        let request = WireRequest {
            id: request_id.to_owned(),
            key: self.key.clone(),
            op: "explain".into(),
            features: features.to_vec(),
        };
        let reply = match self.send_once(&request) {
            Ok(reply) => reply,
            Err(ClientError::Transport(_)) => {
                // Reconnect and resend the same id; the server dedups.
                self.stream = None;
                self.send_once(&request)?
            }
            Err(other) => return Err(other),
        };
        match reply {
            WireReply::Response(r) => {
                if r.id != request_id {
                    return Err(ClientError::Protocol(format!(
                        "reply id {:?} does not match request id {request_id:?}",
                        r.id
                    )));
                }
                let method = match (r.method.kind.as_str(), r.method.nu) {
                    ("exact", _) => ExplainMethod::Exact,
                    ("sampled", Some(nu)) => ExplainMethod::Sampled { nu },
                    other => {
                        return Err(ClientError::Protocol(format!("bad method {other:?}")))
                    }
                };
                Ok(ServedExplanation {
                    request_id: r.id,
                    prediction: r.prediction,
                    target_class: r.target_class,
                    released: ReleasedExplanation {
                        entries: r.shapley.iter().map(|e| (e.index, e.value)).collect(),
                        n_features: features.len(),
                        target_class: r.target_class,
                        method,
                        reference_id: String::new(),
                    },
                    method,
                    remaining: r.remaining,
                })
            }
            WireReply::Error(e) if e.error == ERR_BUDGET_EXHAUSTED => {
                Err(ClientError::BudgetExhausted(e.detail))
            }
            WireReply::Error(e) => Err(ClientError::Rejected {
                code: e.error,
                detail: e.detail,
            }),
        }
    }

    /// One explain query with an auto-generated sequential id.
    pub fn query_explain(&mut self, features: &[f64]) -> Result<ServedExplanation, ClientError> {
        let id = format!("{}-{}", self.id_prefix, self.counter);
        self.counter += 1;
        self.query_explain_with_id(&id, features)
    }

    /// Explain every row in order. Stops at the first failure and reports
    /// the completed prefix.
    pub fn batch_explain(
        &mut self,
        rows: &[Vec<f64>],
    ) -> Result<Vec<ServedExplanation>, BatchError> {
        let mut completed = Vec::with_capacity(rows.len());
        for row in rows {
            match self.query_explain(row) {
                Ok(served) => completed.push(served),
                Err(cause) => return Err(BatchError { completed, cause }),
            }
        }
        Ok(completed)
    }
}
