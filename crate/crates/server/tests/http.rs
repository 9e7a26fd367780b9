use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use richq_core::harness::ExperimentConfig;
use richq_core::session::SessionManager;
use richq_server::router;

fn app(kind: &str, extra: &str) -> Router {
    let m = SessionManager::new();
    let cfg = ExperimentConfig::from_toml(&format!(
        "seed = 3\ncommittee_size = 10\nmax_interactions = 5\n{extra}\n\
         [pool]\nsource = \"synthetic\"\ndim = 3\nitems = 30\n\
         [policy]\ntype = \"fixed\"\nkind = \"{kind}\"\nset_size = 3\n"
    ))
    .unwrap();
    m.register("demo", cfg).unwrap();
    router(Arc::new(m))
}

async fn call(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(path).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router) -> String {
    let (s, v) = call(app, "/create", json!({"config_ref": "demo"})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn answer_for(query: &Value) -> Value {
    match query["kind"].as_str().unwrap() {
        "label" => json!({"y": 1}),
        "select_high" | "select_low" => json!({"index": 0, "y": -1}),
        "rank" => json!({"order": [2, 0, 1], "threshold": 1}),
        other => panic!("unexpected kind {other}"),
    }
}

#[tokio::test]
async fn full_round_trip_for_every_kind() {
    for kind in ["label", "select", "rank"] {
        let app = app(kind, "");
        let id = create(&app).await;
        let (s, q) = call(&app, "/next", json!({"session_id": id})).await;
        assert_eq!(s, StatusCode::OK, "{q}");
        let n = q["set_size"].as_u64().unwrap() as usize;
        assert_eq!(q["items"].as_array().unwrap().len(), n);
        for item in q["items"].as_array().unwrap() {
            assert!(item["id"].is_string() && item["display"].is_string());
        }
        let (s, a) = call(
            &app,
            "/answer",
            json!({"session_id": id, "query_id": q["query_id"], "payload": answer_for(&q), "elapsed_ms": 4200}),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{a}");
        assert_eq!(a["interactions"], 1);
        assert!(a["log_det_sigma"].is_number());
        assert!(matches!(a["status"].as_str(), Some("active") | Some("stopped")));
    }
}

#[tokio::test]
async fn errors_map_to_statuses() {
    let app = app("rank", "");
    let (s, v) = call(&app, "/create", json!({"config_ref": "missing"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "config");

    let (s, v) = call(&app, "/next", json!({"session_id": "nope"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");

    let (s, _) = call(&app, "/next", json!({"wrong": 1})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let id = create(&app).await;
    let (_, q) = call(&app, "/next", json!({"session_id": id})).await;
    let (s, v) = call(&app, "/next", json!({"session_id": id})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "protocol");

    // repeated index: rejected, query still pending
    let bad = json!({"session_id": id, "query_id": q["query_id"], "payload": {"order": [0, 0, 1], "threshold": 1}, "elapsed_ms": 10});
    let (s, v) = call(&app, "/answer", bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    let wrong_kind = json!({"session_id": id, "query_id": q["query_id"], "payload": {"y": 1}, "elapsed_ms": 10});
    let (s, _) = call(&app, "/answer", wrong_kind).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let good = json!({"session_id": id, "query_id": q["query_id"], "payload": answer_for(&q), "elapsed_ms": 10});
    let (s, a) = call(&app, "/answer", good).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["interactions"], 1);

    let (s, v) = call(&app, "/stop", json!({"session_id": id})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "stopped");
    let (s, v) = call(&app, "/next", json!({"session_id": id})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "session_stopped");
}

#[tokio::test]
async fn negative_elapsed_time_is_rejected() {
    let app = app("label", "");
    let id = create(&app).await;
    let (_, q) = call(&app, "/next", json!({"session_id": id})).await;
    let (s, _) =
        call(&app, "/answer", json!({"session_id": id, "query_id": q["query_id"], "payload": {"y": 1}, "elapsed_ms": -5})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sessions_are_independent_under_concurrency() {
    let app = app("select", "");
    let ids = [create(&app).await, create(&app).await, create(&app).await];
    let tasks: Vec<_> = ids
        .iter()
        .cloned()
        .map(|id| {
            let app = app.clone();
            tokio::spawn(async move {
                let mut queries = Vec::new();
                for _ in 0..3 {
                    let (_, q) = call(&app, "/next", json!({"session_id": id})).await;
                    let body = json!({"session_id": id, "query_id": q["query_id"], "payload": answer_for(&q), "elapsed_ms": 1});
                    let (s, _) = call(&app, "/answer", body).await;
                    assert_eq!(s, StatusCode::OK);
                    queries.push(q["items"].clone());
                }
                queries
            })
        })
        .collect();
    let mut results = Vec::new();
    for t in tasks {
        results.push(t.await.unwrap());
    }
    // same config and seed, same answers: same query sequence in every session
    assert!(results.windows(2).all(|w| w[0] == w[1]));
}
