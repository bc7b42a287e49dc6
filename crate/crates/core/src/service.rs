//! JSON-over-HTTP game service.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::session::*;

#[derive(Default)]
struct Store {
    structures: BTreeMap<String, StoredStructure>,
    games: BTreeMap<String, Arc<Mutex<Session>>>,
    next: u64,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    seed: u64,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(seed: u64, data_dir: Option<PathBuf>) -> AppState {
        AppState {
            store: Arc::new(Mutex::new(Store::default())),
            seed,
            data_dir,
        }
    }

    fn snapshot(&self, s: &Session) {
        if let Some(dir) = &self.data_dir {
            let path = dir.join(format!("{}.json", s.id));
            if let Err(e) = std::fs::write(&path, s.view().to_string()) {
                eprintln!("snapshot {}: {e}", path.display());
            }
        }
    }
}

fn error(code: StatusCode, msg: impl ToString) -> Response {
    (code, Json(json!({"error": msg.to_string()}))).into_response()
}

fn parse_body(body: &Bytes) -> Result<Value, Response> {
    serde_json::from_slice(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/structures", post(add_structure).get(list_structures))
        .route("/api/games", post(new_game))
        .route("/api/games/{id}", get(get_game))
        .route("/api/games/{id}/moves", post(post_move))
        .with_state(state)
}

async fn add_structure(State(app): State<AppState>, body: Bytes) -> Response {
    let v = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let s = match StoredStructure::from_json(&v) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let mut store = app.store.lock().expect("store lock");
    store.next += 1;
    let id = format!("s{}", store.next);
    store.structures.insert(id.clone(), s);
    (StatusCode::CREATED, Json(json!({"id": id}))).into_response()
}

async fn list_structures(State(app): State<AppState>) -> Response {
    let store = app.store.lock().expect("store lock");
    let list: Vec<Value> = store
        .structures
        .iter()
        .map(|(id, s)| {
            let mut v = s.summary();
            v["id"] = json!(id);
            v
        })
        .collect();
    Json(json!({"structures": list})).into_response()
}

async fn new_game(State(app): State<AppState>, body: Bytes) -> Response {
    let v = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let Some(sid) = v.get("structureId").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "missing structureId");
    };
    let (structure, id, seed) = {
        let mut store = app.store.lock().expect("store lock");
        let Some(s) = store.structures.get(sid).cloned() else {
            return error(StatusCode::NOT_FOUND, format!("unknown structure {sid}"));
        };
        store.next += 1;
        let id = format!("g{}", store.next);
        (s, id, app.seed.wrapping_add(store.next))
    };
    let m = v.get("m").and_then(Value::as_u64).map(|m| m as usize);
    let kind = match parse_kind(
        v.get("kind").and_then(Value::as_str).unwrap_or("H"),
        m,
        structure.dimension(),
    ) {
        Ok(k) => k,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let human = match parse_player(v.get("humanRole").and_then(Value::as_str).unwrap_or("A")) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let rounds = v.get("rounds").and_then(Value::as_u64).unwrap_or(4) as usize;
    if rounds > 64 {
        return error(StatusCode::BAD_REQUEST, "at most 64 rounds");
    }
    let cfg = GameConfig {
        kind,
        human,
        rounds,
        restricted: v.get("restricted").and_then(Value::as_bool).unwrap_or(true),
        seed,
    };
    let sid = sid.to_string();
    let gid = id.clone();
    // The engine may open the game, so build it off the async workers.
    let session =
        match tokio::task::spawn_blocking(move || Session::new(gid, sid, &structure, cfg)).await {
            Ok(s) => s,
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
        };
    app.snapshot(&session);
    app.store
        .lock()
        .expect("store lock")
        .games
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    (StatusCode::CREATED, Json(json!({"gameId": id}))).into_response()
}

fn find(app: &AppState, id: &str) -> Option<Arc<Mutex<Session>>> {
    app.store.lock().expect("store lock").games.get(id).cloned()
}

async fn get_game(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    let Some(g) = find(&app, &id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown game {id}"));
    };
    match tokio::task::spawn_blocking(move || g.lock().expect("game lock").view()).await {
        Ok(v) => Json(v).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn post_move(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let v = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let Some(g) = find(&app, &id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown game {id}"));
    };
    let Some(mv) = v.get("move").cloned() else {
        return error(StatusCode::BAD_REQUEST, "missing move");
    };
    let app2 = app.clone();
    let out = tokio::task::spawn_blocking(move || {
        let mut s = g.lock().expect("game lock");
        match s.play(&mv) {
            Ok(()) => {
                app2.snapshot(&s);
                (StatusCode::OK, s.view())
            }
            Err(PlayError::Malformed(e)) => (StatusCode::BAD_REQUEST, json!({"error": e})),
            Err(e) => {
                let (legal, truncated) = if s.to_move().is_some() {
                    s.legal()
                } else {
                    (Vec::new(), false)
                };
                (
                    StatusCode::CONFLICT,
                    json!({"error": e.to_string(), "legal": legal, "legalTruncated": truncated}),
                )
            }
        }
    })
    .await;
    match out {
        Ok((code, v)) => (code, Json(v)).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

/// Serve on `addr` until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
