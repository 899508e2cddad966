//! HTTP protocol for interactive replay sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | /health | | `{"status":"ok"}` |
//! | GET | /logs | | `[{name, kind, steps}]` |
//! | POST | /sessions | `{log, params?, mode?, seed?, reset?}` | `{session_id}` |
//! | GET | /sessions/{id}?cap=N | | state and current frame |
//! | PATCH | /sessions/{id}/params | partial parameters | full parameters |
//! | POST | /sessions/{id}/step | `{n_steps, cap?}` | NDJSON frames, streamed |
//! | POST | /sessions/{id}/reset | `{init, preset?, start_step?}` | state and frame |

use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use orchard_core::session::{Frame, ResetRequest, Session, SessionState};
use orchard_core::sim::TrajectoryKind;
use orchard_core::{FilterParams, OdometryMode, OrchardMap, ParamPatch, SensorConfig, SimLog};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc;
use tokio_stream::wrappers::ReceiverStream;

type Shared = Arc<Mutex<Session>>;

pub struct AppState {
    pub map: OrchardMap,
    pub logs: BTreeMap<String, Arc<SimLog>>,
    pub sensor: SensorConfig,
    pub params: FilterParams,
    pub seed: u64,
    sessions: RwLock<HashMap<u64, Shared>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(map: OrchardMap, logs: Vec<SimLog>, sensor: SensorConfig, params: FilterParams, seed: u64) -> Self {
        Self {
            map,
            logs: logs.into_iter().map(|l| (l.header.name.clone(), Arc::new(l))).collect(),
            sensor,
            params,
            seed,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn session(&self, id: u64) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/logs", get(list_logs))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/params", patch(patch_params))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/reset", post(reset_session))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(message: String) -> Self {
        Self { status: StatusCode::NOT_FOUND, message }
    }

    fn invalid(message: String) -> Self {
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, message }
    }
}

impl From<orchard_core::Error> for ApiError {
    fn from(e: orchard_core::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Serialize)]
struct LogInfo<'a> {
    name: &'a str,
    kind: TrajectoryKind,
    steps: usize,
}

async fn list_logs(State(app): State<Arc<AppState>>) -> Response {
    let logs: Vec<LogInfo> =
        app.logs.values().map(|l| LogInfo { name: &l.header.name, kind: l.kind(), steps: l.steps.len() }).collect();
    Json(logs).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    log: String,
    #[serde(default)]
    params: ParamPatch,
    mode: Option<OdometryMode>,
    seed: Option<u64>,
    reset: Option<ResetRequest>,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let log =
        app.logs.get(&req.log).cloned().ok_or_else(|| ApiError::not_found(format!("no log named {:?}", req.log)))?;
    let params = req.params.apply(&app.params)?;
    let mode = req.mode.unwrap_or(OdometryMode::Gnss);
    let app2 = app.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let mut s = Session::new(log, &app2.map, app2.sensor, params, mode, req.seed.unwrap_or(app2.seed))?;
        if let Some(r) = req.reset {
            s.reset(r)?;
        }
        Ok(s)
    })
    .await
    .expect("session setup panicked")?;
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    app.sessions.write().expect("session table poisoned").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

#[derive(Deserialize)]
struct CapQuery {
    cap: Option<usize>,
}

#[derive(Serialize)]
struct SessionReply {
    session_id: u64,
    state: SessionState,
    frame: Frame,
}

fn reply(id: u64, s: &Session, cap: Option<usize>) -> Json<SessionReply> {
    Json(SessionReply { session_id: id, state: s.state(), frame: s.current_frame(cap) })
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(q): Query<CapQuery>,
) -> Result<Json<SessionReply>, ApiError> {
    let shared = app.session(id)?;
    let s = shared.lock().expect("session poisoned");
    Ok(reply(id, &s, q.cap))
}

async fn patch_params(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(patch): Json<ParamPatch>,
) -> Result<Json<ParamPatch>, ApiError> {
    let shared = app.session(id)?;
    let mut s = shared.lock().expect("session poisoned");
    let p = s.patch(&patch)?;
    Ok(Json(ParamPatch::from_params(&p)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    n_steps: usize,
    cap: Option<usize>,
}

/// Frames are written as they are computed, one JSON object per line.
async fn step_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(req): Json<StepRequest>,
) -> Result<Response, ApiError> {
    let shared = app.session(id)?;
    let (tx, rx) = mpsc::channel::<Result<Bytes, Infallible>>(16);
    tokio::task::spawn_blocking(move || {
        let mut s = shared.lock().expect("session poisoned");
        for _ in 0..req.n_steps {
            let Some(frame) = s.step(1, req.cap).pop() else { break };
            let mut line = serde_json::to_vec(&frame).expect("frames serialize");
            line.push(b'\n');
            if tx.blocking_send(Ok(Bytes::from(line))).is_err() {
                break;
            }
        }
    });
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(ReceiverStream::new(rx)))
        .expect("valid response"))
}

async fn reset_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Json(req): Json<ResetRequest>,
) -> Result<Json<SessionReply>, ApiError> {
    let shared = app.session(id)?;
    let mut s = shared.lock().expect("session poisoned");
    s.reset(req)?;
    Ok(reply(id, &s, None))
}

/// Binds `127.0.0.1:port` and serves until interrupted.
pub async fn serve(app: Arc<AppState>, port: u16) -> anyhow::Result<()> {
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    let listener =
        tokio::net::TcpListener::bind(addr).await.map_err(|e| anyhow::anyhow!("cannot listen on {addr}: {e}"))?;
    eprintln!("serving {} logs on http://{addr}", app.logs.len());
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
