use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use privclean_cli::commands::{replay_trace, ReplayData};
use privclean_cli::config::SessionDefaults;
use privclean_cli::service::{router, AppState};
use privclean_core::accountant::AccountantMode;
use privclean_core::cleaners::SynthConfig;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(seed: Option<u64>, trace_dir: Option<std::path::PathBuf>) -> Router {
    let data = Arc::new(
        SynthConfig::default()
            .generate()
            .unwrap()
            .binding()
            .unwrap(),
    );
    let defaults = SessionDefaults {
        budget: 1.0,
        delta: 3e-7,
        mode: AccountantMode::Sequential,
    };
    router(Arc::new(AppState::new(
        vec![("synthetic".into(), data)],
        defaults,
        seed,
        trace_dir,
    )))
}

fn app() -> Router {
    app_with(Some(5), None)
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    send_raw(app, method, uri, body.map(|b| b.to_string())).await
}

async fn send_raw(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

/// LC over the left base table costing `ln(1/beta)/alpha` = 15/alpha.
fn null_count(alpha: f64) -> Value {
    json!({
        "type": "LC",
        "target": {"kind": "baseTable", "dataset": "left"},
        "formula": {"shape": "disjunction", "atoms": [{"attr": "city", "isNull": true}]},
        "alpha": alpha
    })
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = send(app, Method::POST, "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn create_session_starts_empty() {
    let app = app();
    let (status, v) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"dataset": "synthetic", "B": 0.1})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["spent"], 0.0);
    assert_eq!(v["budget"], 0.1);
    assert_eq!(v["state"], "open");
    let id = v["id"].as_str().unwrap();
    let (status, again) = send(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, v);
}

#[tokio::test]
async fn datasets_expose_only_public_metadata() {
    let (status, v) = send(&app(), Method::GET, "/datasets", None).await;
    assert_eq!(status, StatusCode::OK);
    let entry = v[0].as_object().unwrap();
    let mut keys: Vec<_> = entry.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(
        keys,
        ["attributes", "baseTables", "id", "pairs", "positives"]
    );
    assert_eq!(entry["pairs"], 100);
    assert_eq!(entry["positives"], 50);
}

#[tokio::test]
async fn budget_exhaustion_is_a_denial_not_an_error() {
    let app = app();
    let id = create(
        &app,
        json!({"dataset": "synthetic", "budget": 0.1, "mode": "sequential"}),
    )
    .await;
    let uri = format!("/sessions/{id}/queries");
    let (status, v) = send(&app, Method::POST, &uri, Some(null_count(150.0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "answered");
    assert_eq!(v["spentTotal"], 0.1);
    let mut keys: Vec<_> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["answer", "estimateChecked", "spentTotal", "status"]);

    let (status, v) = send(&app, Method::POST, &uri, Some(null_count(150.0))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "denied");
    assert!(v.get("answer").is_none());
    assert_eq!(v["spentTotal"], 0.1);

    let (_, s) = send(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(
        (s["answered"].as_u64(), s["denied"].as_u64()),
        (Some(1), Some(1))
    );
    assert_eq!(s["remaining"], 0.0);
    assert_eq!(s["state"], "exhausted");
}

#[tokio::test]
async fn error_codes() {
    let app = app();
    let (status, _) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"dataset": "nope"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"dataset": "synthetic", "B": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"dataset": "synthetic", "mode": "loose"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, Method::GET, "/sessions/s999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(
        &app,
        Method::POST,
        "/sessions/s999/queries",
        Some(null_count(10.0)),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = create(&app, json!({"dataset": "synthetic"})).await;
    let uri = format!("/sessions/{id}/queries");
    let (status, v) = send_raw(&app, Method::POST, &uri, Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("malformed"));
    let mut bad = null_count(10.0);
    bad["formula"]["atoms"][0]["attr"] = json!("zip");
    let (status, v) = send(&app, Method::POST, &uri, Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("zip"));
    let (status, _) = send(
        &app,
        Method::POST,
        &uri,
        Some(json!({"type": "LC", "alpha": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut negative = null_count(10.0);
    negative["alpha"] = json!(-1.0);
    let (status, _) = send(&app, Method::POST, &uri, Some(negative)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = send(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"], "closed");
    let (status, _) = send(&app, Method::POST, &uri, Some(null_count(10.0))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = send(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, v) = send(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["answered"], 0);
}

#[tokio::test]
async fn unlimited_budget_round_trips_as_null() {
    let app = app();
    let (status, v) = send(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"dataset": "synthetic", "B": null, "mode": "moments"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(v["budget"].is_null());
    assert!(v["remaining"].is_null());
    assert_eq!(v["mode"]["mode"], "moments");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallel_sessions_account_independently() {
    let app = app();
    let alphas = [150.0, 300.0, 75.0, 1500.0, 30.0];
    let mut tasks = Vec::new();
    for i in 0..8 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let budget = 0.2 + 0.1 * i as f64;
            let id = create(
                &app,
                json!({"dataset": "synthetic", "budget": budget, "mode": "sequential"}),
            )
            .await;
            let mut expected = 0.0;
            for round in 0..6 {
                for &a in &alphas {
                    let (_, v) = send(
                        &app,
                        Method::POST,
                        &format!("/sessions/{id}/queries"),
                        Some(null_count(a)),
                    )
                    .await;
                    if v["status"] == "answered" {
                        expected += 15.0 / a;
                    }
                    assert!(v["spentTotal"].as_f64().unwrap() <= budget, "round {round}");
                }
            }
            let (_, s) = send(&app, Method::GET, &format!("/sessions/{id}"), None).await;
            (budget, expected, s)
        }));
    }
    for t in tasks {
        let (budget, expected, s) = t.await.unwrap();
        let spent = s["spent"].as_f64().unwrap();
        assert!(
            (spent - expected).abs() < 1e-9,
            "spent {spent}, expected {expected}"
        );
        assert!(spent <= budget);
        assert_eq!(
            s["answered"].as_u64().unwrap() + s["denied"].as_u64().unwrap(),
            30
        );
    }
}

#[tokio::test]
async fn closed_session_trace_replays_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(None, Some(dir.path().join("traces")));
    let id = create(
        &app,
        json!({"dataset": "synthetic", "budget": 2.0, "mode": "moments"}),
    )
    .await;
    let uri = format!("/sessions/{id}/queries");
    let pred = json!({"attr": "name", "transform": "qgram2", "sim": "jaccard", "theta": 0.5});
    let queries = [
        null_count(20.0),
        json!({"type": "LC", "target": {"kind": "pairs", "filter": "positives"},
               "formula": {"shape": "disjunction", "atoms": [pred]}, "alpha": 8}),
        json!({"type": "LCC", "target": {"kind": "pairs", "filter": "negatives"},
               "formula": {"shape": "disjunction", "atoms": [pred]}, "alpha": 8,
               "c": 10, "direction": "<", "translator": {"kind": "lcmmp", "steps": 5}}),
        json!({"type": "LCT", "target": {"kind": "baseTable", "dataset": "left"},
               "formulas": [{"shape": "disjunction", "atoms": [{"attr": "city", "isNull": true}]},
                            {"shape": "disjunction", "atoms": [{"attr": "type", "isNull": true}]},
                            {"shape": "disjunction", "atoms": [{"attr": "name", "isNull": true}]}],
               "alpha": 10, "k": 2, "order": "smallest"}),
        null_count(0.5),
    ];
    let mut statuses = Vec::new();
    for q in queries {
        let (status, v) = send(&app, Method::POST, &uri, Some(q)).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        statuses.push(v["status"].as_str().unwrap().to_string());
    }
    assert_eq!(statuses.last().unwrap(), "denied");
    send(&app, Method::DELETE, &format!("/sessions/{id}"), None).await;

    let trace = dir.path().join("traces").join(format!("{id}.jsonl"));
    let source = dir.path().join("data.json");
    std::fs::write(&source, r#"{"kind": "synthetic"}"#).unwrap();
    let csv = replay_trace(&trace, &ReplayData::Source(source.clone())).unwrap();
    let replayed: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(replayed, statuses);
    assert_eq!(
        csv,
        replay_trace(&trace, &ReplayData::Source(source)).unwrap()
    );
}
