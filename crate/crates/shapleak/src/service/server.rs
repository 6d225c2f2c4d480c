//! The pay-per-query service: a thread-per-connection TCP server speaking
//! the line protocol, with per-key budgets, request-id replay and a query
//! log. Budget state is one linearizable counter map: each request is
//! processed under the state lock, so a key can never overspend.

use super::engine::{EngineError, ExplainEngine};
use super::protocol::*;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad service config: {0}")]
    BadConfig(String),
}

/// One successfully answered explain request.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub api_key: String,
    /// Seconds since the epoch at answer time.
    pub timestamp: u64,
    /// FNV hash of the queried features; the raw input is never stored.
    pub sample_hash: u64,
    /// Requests answered for this key so far, including this one.
    pub queries_used: u64,
}

struct ServerState {
    budgets: HashMap<String, u64>,
    used: HashMap<String, u64>,
    /// Replay cache: (key, request id) -> serialized reply line.
    replay: HashMap<(String, String), String>,
    log: Vec<QueryRecord>,
}

struct Shared {
    engine: ExplainEngine,
    state: Mutex<ServerState>,
}

/// Handle on a running service; dropping it (or calling `shutdown`) stops
/// the accept loop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    join: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Remaining budget for a key.
    pub fn remaining(&self, key: &str) -> Option<u64> {
        self.shared.state.lock().unwrap().budgets.get(key).copied()
    }

    /// Successfully answered explain requests for a key.
    pub fn queries_used(&self, key: &str) -> u64 {
        self.shared
            .state
            .lock()
            .unwrap()
            .used
            .get(key)
            .copied()
            .unwrap_or(0)
    }

    pub fn query_log(&self) -> Vec<QueryRecord> {
        self.shared.state.lock().unwrap().log.clone()
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Poke the listener so the accept loop notices.
        let _ = TcpStream::connect(self.addr);
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Start serving on `listen` (e.g. `127.0.0.1:0` for an ephemeral port).
pub fn serve(
    engine: ExplainEngine,
    budgets: HashMap<String, u64>,
    listen: &str,
) -> Result<ServerHandle, ServiceError> {
    if budgets.is_empty() {
        return Err(ServiceError::BadConfig("no api keys configured".into()));
    }
    let listener = TcpListener::bind(listen).map_err(|e| ServiceError::Bind {
        addr: listen.to_owned(),
        source: e,
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind {
        addr: listen.to_owned(),
        source: e,
    })?;
    let shared = Arc::new(Shared {
        engine,
        state: Mutex::new(ServerState {
            budgets,
            used: HashMap::new(),
            replay: HashMap::new(),
            log: Vec::new(),
        }),
    });
    let stop = Arc::new(AtomicBool::new(false));

    let accept_shared = Arc::clone(&shared);
    let accept_stop = Arc::clone(&stop);
    let join = std::thread::spawn(move || {
        for incoming in listener.incoming() {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = incoming else { continue };
            let shared = Arc::clone(&accept_shared);
            std::thread::spawn(move || serve_connection(stream, &shared));
        }
    });

    Ok(ServerHandle {
        addr,
        stop,
        shared,
        join: Some(join),
    })
}

fn serve_connection(stream: TcpStream, shared: &Shared) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(300)));
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let reply = handle_line(&line, shared);
        if writer.write_all(reply.as_bytes()).is_err() || writer.write_all(b"\n").is_err() {
            break;
        }
        let _ = writer.flush();
    }
}

fn error_line(id: &str, code: &str, detail: &str) -> String {
    serde_json::to_string(&WireError {
        id: id.to_owned(),
        error: code.to_owned(),
        detail: detail.to_owned(),
    })
    .expect("error serializes")
}

fn handle_line(line: &str, shared: &Shared) -> String {
    // Pull the id out even from requests that do not fully parse, so the
    // client can correlate the error.
    let id = serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_owned))
        .unwrap_or_default();

    let request: WireRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return error_line(&id, ERR_BAD_REQUEST, &format!("malformed request: {e}")),
    };
    if request.op != "explain" {
        return error_line(
            &request.id,
            ERR_BAD_REQUEST,
            &format!("unsupported op {:?}", request.op),
        );
    }

    // The whole request is processed under the state lock: replay lookup,
    // budget check, explanation and commit are one atomic step.
    let mut state = shared.state.lock().unwrap();

    let replay_key = (request.key.clone(), request.id.clone());
    if let Some(cached) = state.replay.get(&replay_key) {
        return cached.clone();
    }

    let Some(&budget) = state.budgets.get(&request.key) else {
        return error_line(&request.id, ERR_BAD_REQUEST, "unknown api key");
    };
    if budget == 0 {
        return error_line(
            &request.id,
            ERR_BUDGET_EXHAUSTED,
            "query budget exhausted for this key",
        );
    }

    let reply = match shared.engine.answer(&request.id, &request.features) {
        Ok(answer) => {
            let remaining = budget - 1;
            *state.budgets.get_mut(&request.key).expect("key exists") = remaining;
            let used = state.used.entry(request.key.clone()).or_insert(0);
            *used += 1;
            let queries_used = *used;
            state.log.push(QueryRecord {
                api_key: request.key.clone(),
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                sample_hash: feature_hash(&request.features),
                queries_used,
            });
            let response = WireResponse {
                id: request.id.clone(),
                prediction: answer.prediction,
                target_class: answer.target_class,
                shapley: answer
                    .released
                    .entries
                    .iter()
                    .map(|&(index, value)| WireShapleyEntry { index, value })
                    .collect(),
                method: shared.engine.method().as_explain_method().into(),
                remaining,
            };
            let line = serde_json::to_string(&response).expect("response serializes");
            state.replay.insert(replay_key, line.clone());
            line
        }
        Err(EngineError::BadRequest(detail)) => {
            // Invalid requests are not charged and not cached.
            error_line(&request.id, ERR_BAD_REQUEST, &detail)
        }
        Err(EngineError::Internal(detail)) => error_line(&request.id, ERR_INTERNAL, &detail),
    };
    reply
}

fn feature_hash(features: &[f64]) -> u64 {
    let mut bytes = Vec::with_capacity(features.len() * 8);
    for v in features {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    crate::rng::fnv1a64(&bytes)
}
