use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dsts_core::{Design, InteractionDataset, Query};
use dsts_session::{router, session_step, AppState, Session, SessionConfig, Status};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty)).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    (status, value)
}

fn config(seed: u64) -> Value {
    json!({
        "design_labels": ["stride", "cadence"],
        "objective_labels": ["comfort", "speed"],
        "q": 2,
        "seed": seed,
        "fit": {"restarts": 3, "local_searches": 1, "max_evals": 60},
        "policy": {"name": "dsts", "inner_opt": {"restarts": 3, "raw_samples": 128, "max_iters": 60}, "features": 300},
    })
}

async fn create(app: &Router, cfg: Value) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(cfg)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

async fn wait_for_query(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (status, body) = call(app, "GET", &format!("/sessions/{id}/query"), None).await;
        assert_eq!(status, StatusCode::OK);
        if body["status"] == "awaiting-response" {
            assert!(body["query"].is_object());
            return body;
        }
        assert_eq!(body["status"], "computing");
        assert!(body["query"].is_null());
        assert!(start.elapsed() < Duration::from_secs(120), "no query after two minutes");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

// Hidden preferences of the scripted participant.
fn utility(j: usize, x: &[f64]) -> f64 {
    let target = if j == 0 { [0.2, 0.0] } else { [0.8, 1.0] };
    -x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn choose(query: &Value) -> Vec<usize> {
    let designs: Vec<Vec<f64>> = query["designs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["coords"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
        .collect();
    (0..2)
        .map(|j| {
            let mut best = 0;
            for (i, x) in designs.iter().enumerate() {
                if utility(j, x) > utility(j, &designs[best]) {
                    best = i;
                }
            }
            best + 1
        })
        .collect()
}

fn dominated_flags(means: &[Vec<f64>]) -> Vec<usize> {
    (0..means.len())
        .filter(|&i| {
            !means.iter().any(|o| o.iter().zip(&means[i]).all(|(a, b)| a >= b) && o.iter().zip(&means[i]).any(|(a, b)| a > b))
        })
        .collect()
}

fn as_matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array().unwrap().iter().map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()).collect()
}

#[tokio::test]
async fn create_serves_an_initial_query() {
    let app = router(AppState::default(), None);
    let a = create(&app, config(1)).await;
    let b = create(&app, config(1)).await;
    assert_ne!(a, b);
    let (status, first) = call(&app, "GET", &format!("/sessions/{a}/query"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["status"], "awaiting-response");
    assert_eq!(first["query_index"], 0);
    assert_eq!(first["query"]["designs"].as_array().unwrap().len(), 2);
    assert_eq!(first["objective_labels"], json!(["comfort", "speed"]));
    let (_, again) = call(&app, "GET", &format!("/sessions/{a}/query"), None).await;
    assert_eq!(first, again);
}

#[tokio::test]
async fn invalid_configs_name_the_field() {
    let app = router(AppState::default(), None);
    let mut bad = config(1);
    bad["q"] = json!(1);
    let (status, body) = call(&app, "POST", "/sessions", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!((body["code"].as_str(), body["field"].as_str()), (Some("invalid_config"), Some("q")));

    let mut bad = config(1);
    bad["bounds"] = json!([[0.0, 1.0]]);
    let (status, body) = call(&app, "POST", "/sessions", Some(bad)).await;
    assert_eq!((status, body["field"].as_str()), (StatusCode::BAD_REQUEST, Some("bounds")));

    let mut bad = config(1);
    bad["policy"] = json!({"name": "pbo-dts-if"});
    let (status, body) = call(&app, "POST", "/sessions", Some(bad)).await;
    assert_eq!((status, body["field"].as_str()), (StatusCode::BAD_REQUEST, Some("policy")));

    let (status, body) = call(&app, "POST", "/sessions", Some(json!({"q": 2}))).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let app = router(AppState::default(), None);
    for path in ["query", "front", "state"] {
        let (status, body) = call(&app, "GET", &format!("/sessions/nope/{path}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);
        assert_eq!(body["code"], "not_found");
    }
    let (status, _) = call(&app, "POST", "/sessions/nope/response", Some(json!({"winners": [1, 1]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_winners_leave_state_unchanged() {
    let app = router(AppState::default(), None);
    let id = create(&app, config(2)).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    for winners in [json!([5, 1]), json!([1]), json!([0, 1]), json!([1, 2, 1])] {
        let (status, body) = call(&app, "POST", &format!("/sessions/{id}/response"), Some(json!({"winners": winners}))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{winners}");
        assert_eq!((body["code"].as_str(), body["field"].as_str()), (Some("invalid_response"), Some("winners")));
    }
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn duplicate_submission_conflicts() {
    let app = router(AppState::default(), None);
    let id = create(&app, config(3)).await;
    let uri = format!("/sessions/{id}/response");
    let sub = json!({"winners": [1, 2], "query_index": 0});
    let (status, body) = call(&app, "POST", &uri, Some(sub.clone())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!((body["status"].as_str(), body["n_responses"].as_u64()), (Some("computing"), Some(1)));
    let (status, body) = call(&app, "POST", &uri, Some(sub.clone())).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));
    wait_for_query(&app, &id).await;
    let (status, _) = call(&app, "POST", &uri, Some(sub)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["n_responses"], 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn concurrent_submits_serialize() {
    let app = router(AppState::default(), None);
    let id = create(&app, config(4)).await;
    let uri = format!("/sessions/{id}/response");
    let (a, b) = tokio::join!(
        call(&app, "POST", &uri, Some(json!({"winners": [1, 1], "query_index": 0}))),
        call(&app, "POST", &uri, Some(json!({"winners": [2, 2], "query_index": 0})))
    );
    let mut codes = [a.0, b.0];
    codes.sort();
    assert_eq!(codes, [StatusCode::ACCEPTED, StatusCode::CONFLICT]);
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(state["n_responses"], 1);
}

#[test]
fn state_machine_follows_the_cycle() {
    let cfg: SessionConfig = serde_json::from_value(config(5)).unwrap();
    let mut s = Session::new("x".into(), cfg.clone(), 5);
    assert_eq!(s.status, Status::Computing);
    assert!(s.transition(Status::AwaitingResponse).is_err());
    assert!(s.submit(vec![1, 1], None).is_err());
    let step = session_step(&cfg, 5, &s.dataset);
    assert!(s.finish(0, step));
    assert_eq!(s.status, Status::AwaitingResponse);
    assert!(s.transition(Status::Idle).is_err());
    s.submit(vec![2, 1], None).unwrap();
    assert_eq!((s.status, s.pending.is_none()), (Status::Computing, true));
    // An outcome computed for an older dataset is ignored.
    assert!(!s.finish(0, session_step(&cfg, 5, &InteractionDataset::all_latent(2))));
    assert_eq!(s.status, Status::Computing);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_session_replays_offline() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::new(Some(dir.path().to_path_buf())).unwrap(), None);
    let id = create(&app, config(11)).await;

    let (_, front) = call(&app, "GET", &format!("/sessions/{id}/front"), None).await;
    assert_eq!(front["designs"], json!([]));
    assert_eq!(front["non_dominated"], json!([]));

    let mut served: Vec<Value> = Vec::new();
    for k in 0..10 {
        let pending = wait_for_query(&app, &id).await;
        assert_eq!(pending["query_index"], k);
        let winners = choose(&pending["query"]);
        served.push(pending["query"].clone());
        let (status, body) =
            call(&app, "POST", &format!("/sessions/{id}/response"), Some(json!({"winners": winners, "query_index": k}))).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");

        wait_for_query(&app, &id).await;
        let (_, front) = call(&app, "GET", &format!("/sessions/{id}/front"), None).await;
        assert_eq!(front["n_responses"], k + 1);
        let means = as_matrix(&front["means"]);
        let flags: Vec<usize> = serde_json::from_value(front["non_dominated"].clone()).unwrap();
        assert_eq!(flags, dominated_flags(&means), "step {k}");
        let designs: Vec<Design> = serde_json::from_value(front["designs"].clone()).unwrap();
        assert_eq!(designs.len(), means.len());
        let mut shown: Vec<Design> = Vec::new();
        for q in &served {
            for d in serde_json::from_value::<Query>(q.clone()).unwrap().designs {
                if !shown.iter().any(|s| s.same_as(&d)) {
                    shown.push(d);
                }
            }
        }
        assert_eq!(designs, shown);
    }

    let (_, state) = call(&app, "GET", &format!("/sessions/{id}/state"), None).await;
    let cfg: SessionConfig = serde_json::from_value(state["config"].clone()).unwrap();
    let seed = state["seed"].as_u64().unwrap();
    let dataset: InteractionDataset = serde_json::from_value(state["dataset"].clone()).unwrap();
    assert_eq!(dataset.len(), 10);

    // Replay from the persisted snapshot, prefix by prefix.
    let snapshot: Session = serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("{id}.json"))).unwrap()).unwrap();
    assert_eq!(snapshot.dataset, dataset);
    let mut prefix = InteractionDataset::all_latent(2);
    for (k, record) in dataset.records.iter().enumerate() {
        let step = session_step(&cfg, seed, &prefix).unwrap();
        assert_eq!(serde_json::to_value(&step.query).unwrap(), served[k], "query {k}");
        prefix.push(record.query.clone(), record.response.clone()).unwrap();
    }
    let last = session_step(&cfg, seed, &prefix).unwrap();
    assert_eq!(Some(last.query), snapshot.pending);
    assert_eq!(last.front, snapshot.front);

    // A restarted service picks the session up from disk.
    let restarted = router(AppState::new(Some(dir.path().to_path_buf())).unwrap(), None);
    let (status, again) = call(&restarted, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, state);
}

#[tokio::test]
async fn serves_static_bundle() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(AppState::default(), Some(dir.path()));
    let res = app.oneshot(Request::builder().uri("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>ui</html>");
}
