use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use orchard_cli::server::{router, AppState};
use orchard_core::sim::{simulate_log, Direction, SimConfig, TrajectorySpec};
use orchard_core::{generate_map, FilterParams, MapGenParams, SensorConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let map = generate_map(&MapGenParams { rows: 4, trees_per_row: 20, ..MapGenParams::default() }, 3).unwrap();
    let sensor = SensorConfig::default();
    let logs = [(1, "row1"), (2, "row2")]
        .into_iter()
        .map(|(row, name)| {
            let spec = TrajectorySpec::straight(row, Direction::Forward);
            simulate_log(&map, &spec, &sensor, &SimConfig::default(), name, 11).unwrap().log
        })
        .collect();
    let params = FilterParams { particle_count: 500, ..FilterParams::default() };
    router(Arc::new(AppState::new(map, logs, sensor, params, 5)))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

async fn create(app: &Router, body: Value) -> u64 {
    let (status, bytes) = call(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    json_of(&bytes)["session_id"].as_u64().unwrap()
}

async fn step(app: &Router, id: u64, n: usize, cap: usize) -> Vec<Value> {
    let (status, bytes) =
        call(app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({ "n_steps": n, "cap": cap }))).await;
    assert_eq!(status, StatusCode::OK);
    String::from_utf8(bytes).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, bytes) = call(&app(), Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json_of(&bytes), json!({ "status": "ok" }));
}

#[tokio::test]
async fn lists_logs_by_name() {
    let (status, bytes) = call(&app(), Method::GET, "/logs", None).await;
    assert_eq!(status, StatusCode::OK);
    let logs = json_of(&bytes);
    let names: Vec<&str> = logs.as_array().unwrap().iter().map(|l| l["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["row1", "row2"]);
    assert_eq!(logs[0]["kind"], "straight_row");
    assert!(logs[0]["steps"].as_u64().unwrap() > 100);
}

#[tokio::test]
async fn session_lifecycle() {
    let app = app();
    let id = create(&app, json!({ "log": "row1" })).await;
    let (status, bytes) = call(&app, Method::GET, &format!("/sessions/{id}?cap=10"), None).await;
    assert_eq!(status, StatusCode::OK);
    let state = json_of(&bytes);
    assert_eq!(state["state"]["cursor"], 0);
    assert_eq!(state["state"]["log"], "row1");
    assert_eq!(state["frame"]["particles"].as_array().unwrap().len(), 10);

    let frames = step(&app, id, 10, 50).await;
    assert_eq!(frames.len(), 10);
    for (k, f) in frames.iter().enumerate() {
        assert_eq!(f["step"], k);
        assert_eq!(f["particles"].as_array().unwrap().len(), 50);
        for key in ["t", "truth", "estimate", "converged", "group_count", "metrics"] {
            assert!(f.get(key).is_some(), "frame lacks {key}");
        }
        let p = &f["particles"][0];
        for key in ["x", "y", "theta", "weight"] {
            assert!(p.get(key).is_some(), "particle lacks {key}");
        }
        assert!(f["metrics"]["final_error"].is_number());
        assert!(f["metrics"]["distance_traveled"].is_number());
    }
    assert_eq!(step(&app, id, 1, 0).await.len(), 1);
    let (_, bytes) = call(&app, Method::GET, &format!("/sessions/{id}?cap=0"), None).await;
    assert_eq!(json_of(&bytes)["state"]["cursor"], 11);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let app = app();
    let (status, _) = call(&app, Method::POST, "/sessions", Some(json!({ "log": "nope" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) =
        call(&app, Method::POST, "/sessions", Some(json!({ "log": "row1", "params": { "particle_count": 1 } }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::GET, "/sessions/99", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = create(&app, json!({ "log": "row1" })).await;
    let uri = format!("/sessions/{id}/params");
    let (status, bytes) = call(&app, Method::PATCH, &uri, Some(json!({ "sigma_range_w": -1.0 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(json_of(&bytes)["error"].as_str().unwrap().contains("weighting"));
    let (status, _) = call(&app, Method::PATCH, &uri, Some(json!({ "no_such_field": 1.0 }))).await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn patched_weighting_changes_later_frames() {
    let app = app();
    let control = create(&app, json!({ "log": "row2", "seed": 3 })).await;
    let patched = create(&app, json!({ "log": "row2", "seed": 3 })).await;
    let (status, bytes) =
        call(&app, Method::PATCH, &format!("/sessions/{patched}/params"), Some(json!({ "sigma_width_w": 0.05 }))).await;
    assert_eq!(status, StatusCode::OK);
    let full = json_of(&bytes);
    assert_eq!(full["sigma_width_w"], 0.05);
    assert_eq!(full["particle_count"], 500);

    let a = step(&app, control, 60, 0).await;
    let b = step(&app, patched, 60, 0).await;
    assert_eq!(a[0]["truth"], b[0]["truth"]);
    assert_ne!(a.last().unwrap()["metrics"], b.last().unwrap()["metrics"]);

    let again = create(&app, json!({ "log": "row2", "seed": 3 })).await;
    assert_eq!(step(&app, again, 60, 0).await, a);
}

fn extent(frame: &Value) -> (f64, f64) {
    let ps = frame["particles"].as_array().unwrap();
    let span = |k: &str| {
        let v = ps.iter().map(|p| p[k].as_f64().unwrap());
        v.clone().fold(f64::NEG_INFINITY, f64::max) - v.fold(f64::INFINITY, f64::min)
    };
    (span("x"), span("y"))
}

#[tokio::test]
async fn reset_presets_match_protocol_squares() {
    let app = app();
    let id = create(&app, json!({ "log": "row1", "params": { "particle_count": 3000 } })).await;
    step(&app, id, 5, 0).await;
    for (preset, side) in [("large", 30.0), ("small", 10.0)] {
        let (status, bytes) = call(
            &app,
            Method::POST,
            &format!("/sessions/{id}/reset"),
            Some(json!({ "init": "area", "preset": preset })),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        let reply = json_of(&bytes);
        assert_eq!(reply["state"]["cursor"], 0);
        let (w, h) = extent(&reply["frame"]);
        assert!((w / side - 1.0).abs() < 0.05 && (h / side - 1.0).abs() < 0.05, "{preset}: {w} x {h}");
    }
    let (status, bytes) = call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/reset"),
        Some(json!({ "init": "cluster", "start_step": 30 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let reply = json_of(&bytes);
    assert_eq!(reply["state"]["cursor"], 30);
    assert!(reply["frame"]["metrics"]["final_error"].as_f64().unwrap() < 0.5);
    let frames = step(&app, id, 3, 0).await;
    assert_eq!(frames[0]["step"], 30);
}
