//! HTTP front end: the provider's public and admin endpoints plus the
//! ledger endpoints clients use to submit transactions and read state.

use crate::provider::{ProviderError, ProviderService, SharedLedger};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pdfs_core::{Address, Transaction};
use serde::Deserialize;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone)]
pub struct AppState {
    pub provider: Arc<Mutex<ProviderService>>,
    pub ledger: SharedLedger,
    /// When set, the full ledger event history is checkpointed here after
    /// every mutation, so a node process can restart from disk.
    pub chain_file: Option<std::path::PathBuf>,
}

impl AppState {
    /// Writes the full ledger event history to the chain file, if any.
    pub fn checkpoint(&self) {
        let Some(path) = &self.chain_file else { return };
        let events = self.ledger.lock().unwrap().export_events();
        let mut out = String::new();
        for event in &events {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        if let Err(e) = std::fs::write(path, out) {
            eprintln!("chain checkpoint: {e}");
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/manifest", get(get_manifest))
        .route("/entries/:index", get(get_entry_by_index))
        .route("/entries", get(get_entry_by_id))
        .route("/root", get(get_root))
        .route("/admin/publish", post(admin_publish))
        .route("/admin/lock", post(admin_lock))
        .route("/admin/respond", post(admin_respond))
        .route("/chain/submit", post(chain_submit))
        .route("/chain/trace", get(chain_trace))
        .route("/chain/contracts/:addr", get(chain_contract))
        .route("/chain/accounts/:addr", get(chain_account))
        .route("/chain/faucet", post(chain_faucet))
        .route("/chain/clock", get(chain_clock))
        .with_state(state)
}

/// Binds an ephemeral or fixed port and serves until the process exits.
/// Returns the bound address; the responder duty polls in the background.
pub async fn serve(
    state: AppState,
    addr: SocketAddr,
    responder_poll: Option<Duration>,
) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    if let Some(interval) = responder_poll {
        let responder_state = state.clone();
        tokio::spawn(async move {
            loop {
                tokio::time::sleep(interval).await;
                let result = {
                    let mut p = responder_state.provider.lock().unwrap();
                    p.respond_pending()
                };
                match result {
                    Ok(ids) if !ids.is_empty() => responder_state.checkpoint(),
                    Ok(_) => {}
                    Err(e) => eprintln!("censorship responder: {e}"),
                }
            }
        });
    }
    let app = router(state);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            eprintln!("http server: {e}");
        }
    });
    Ok(bound)
}

fn provider_error(e: ProviderError) -> Response {
    let status = match &e {
        ProviderError::NotFound(_) => StatusCode::NOT_FOUND,
        ProviderError::StagedOnly(_) => StatusCode::CONFLICT,
        ProviderError::UpdateRejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(serde_json::json!({ "error": e.to_string() }))).into_response()
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn get_manifest(State(state): State<AppState>) -> Response {
    let bytes = state.provider.lock().unwrap().manifest_bytes();
    json_bytes(bytes)
}

async fn get_entry_by_index(
    State(state): State<AppState>,
    Path(index): Path<u64>,
) -> Response {
    let result = state.provider.lock().unwrap().serve_index(index);
    match result {
        Ok(entry) => json_bytes(entry.to_bytes()),
        Err(e) => provider_error(e),
    }
}

#[derive(Deserialize)]
struct IdQuery {
    id: String,
}

async fn get_entry_by_id(
    State(state): State<AppState>,
    Query(query): Query<IdQuery>,
) -> Response {
    let result = state.provider.lock().unwrap().serve_id(&query.id);
    match result {
        Ok(entry) => json_bytes(entry.to_bytes()),
        Err(e) => provider_error(e),
    }
}

async fn get_root(State(state): State<AppState>) -> Response {
    Json(state.provider.lock().unwrap().root_info()).into_response()
}

async fn admin_publish(State(state): State<AppState>, body: String) -> Response {
    // The batch is an array of JSON documents; each element's exact text
    // becomes the stored entry bytes.
    let parsed: Result<Vec<&serde_json::value::RawValue>, _> = serde_json::from_str(&body);
    let batch: Vec<Vec<u8>> = match parsed {
        Ok(raw) => raw.iter().map(|r| r.get().as_bytes().to_vec()).collect(),
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(serde_json::json!({ "error": format!("batch must be a JSON array: {e}") })),
            )
                .into_response()
        }
    };
    let result = state.provider.lock().unwrap().publish(&batch);
    state.checkpoint();
    match result {
        Ok(outcome) => Json(serde_json::json!(outcome)).into_response(),
        Err(e) => provider_error(e),
    }
}

async fn admin_lock(State(state): State<AppState>) -> Response {
    let result = state.provider.lock().unwrap().lock();
    state.checkpoint();
    match result {
        Ok(()) => Json(serde_json::json!({ "locked": true })).into_response(),
        Err(e) => provider_error(e),
    }
}

async fn admin_respond(State(state): State<AppState>) -> Response {
    let result = state.provider.lock().unwrap().respond_pending();
    state.checkpoint();
    match result {
        Ok(ids) => Json(serde_json::json!({ "answered": ids })).into_response(),
        Err(e) => provider_error(e),
    }
}

async fn chain_submit(State(state): State<AppState>, Json(tx): Json<Transaction>) -> Response {
    let result = state.ledger.lock().unwrap().submit(tx);
    state.checkpoint();
    match result {
        Ok(receipt) => Json(serde_json::json!(receipt)).into_response(),
        Err(e) => (
            StatusCode::BAD_REQUEST,
            Json(serde_json::json!({ "error": e.to_string() })),
        )
            .into_response(),
    }
}

async fn chain_trace(State(state): State<AppState>) -> Response {
    let trace = state.ledger.lock().unwrap().dump_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], trace).into_response()
}

async fn chain_contract(State(state): State<AppState>, Path(addr): Path<String>) -> Response {
    let Ok(addr) = addr.parse::<Address>() else {
        return (StatusCode::BAD_REQUEST, "bad address").into_response();
    };
    let state_json = state.ledger.lock().unwrap().contract_state_json(addr);
    match state_json {
        Some(v) => Json(v).into_response(),
        None => (StatusCode::NOT_FOUND, "no such contract").into_response(),
    }
}

async fn chain_account(State(state): State<AppState>, Path(addr): Path<String>) -> Response {
    let Ok(addr) = addr.parse::<Address>() else {
        return (StatusCode::BAD_REQUEST, "bad address").into_response();
    };
    let balance = state
        .ledger
        .lock()
        .unwrap()
        .account(addr)
        .map(|a| a.balance);
    match balance {
        Some(balance) => Json(serde_json::json!({ "balance": balance })).into_response(),
        None => (StatusCode::NOT_FOUND, "no such account").into_response(),
    }
}

#[derive(Deserialize)]
struct FaucetRequest {
    public_key: String,
    balance: u64,
}

async fn chain_faucet(
    State(state): State<AppState>,
    Json(req): Json<FaucetRequest>,
) -> Response {
    let key = hex::decode(&req.public_key)
        .ok()
        .and_then(|b| <[u8; 32]>::try_from(b).ok())
        .and_then(|b| ed25519_dalek::VerifyingKey::from_bytes(&b).ok());
    let Some(key) = key else {
        return (StatusCode::BAD_REQUEST, "public_key must be 32 hex bytes").into_response();
    };
    let addr = state.ledger.lock().unwrap().create_account(key, req.balance);
    state.checkpoint();
    Json(serde_json::json!({ "address": addr.to_string() })).into_response()
}

async fn chain_clock(State(state): State<AppState>) -> Response {
    let (clock, tx_count) = {
        let l = state.ledger.lock().unwrap();
        (l.clock(), l.tx_count())
    };
    Json(serde_json::json!({ "clock": clock, "tx_count": tx_count })).into_response()
}
