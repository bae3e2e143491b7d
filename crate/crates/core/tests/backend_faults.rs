//! Live client against a scripted local server: retries, fail-fast, cache
//! persistence and the in-flight bound.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use cogfx_core::backend::{
    dispatch, Backend, BackendConfig, BackendError, Cache, Client, DecodeParams, DispatchOptions, LiveBackend, RetryPolicy,
};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug)]
enum Reply {
    Ok,
    Status(u16),
    Garbage,
    Slow(u64),
}

#[derive(Default)]
struct Server {
    script: Mutex<Vec<Reply>>,
    fallback: Mutex<Option<Reply>>,
    hits: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    delay_ms: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<String>>,
}

fn completion() -> Value {
    json!({
        "choices": [{
            "text": " yes",
            "logprobs": {"tokens": [" yes"], "top_logprobs": [{" yes": -0.1, " no": -2.5}]}
        }]
    })
}

async fn handle(State(s): State<Arc<Server>>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    s.hits.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak.fetch_max(now, Ordering::SeqCst);
    s.bodies.lock().unwrap().push(body);
    if let Some(a) = headers.get("authorization") {
        s.auth.lock().unwrap().push(a.to_str().unwrap().to_string());
    }
    let reply = {
        let mut script = s.script.lock().unwrap();
        if script.is_empty() {
            s.fallback.lock().unwrap().unwrap_or(Reply::Ok)
        } else {
            script.remove(0)
        }
    };
    let delay = s.delay_ms.load(Ordering::SeqCst) as u64;
    if delay > 0 {
        tokio::time::sleep(Duration::from_millis(delay)).await;
    }
    let resp = match reply {
        Reply::Ok => Json(completion()).into_response(),
        Reply::Status(code) => (StatusCode::from_u16(code).unwrap(), "scripted failure").into_response(),
        Reply::Garbage => (StatusCode::OK, "not json").into_response(),
        Reply::Slow(ms) => {
            tokio::time::sleep(Duration::from_millis(ms)).await;
            Json(completion()).into_response()
        }
    };
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    resp
}

async fn serve(script: Vec<Reply>) -> (Arc<Server>, String) {
    let server = Arc::new(Server { script: Mutex::new(script), ..Default::default() });
    let app = Router::new().route("/v1/completions", post(handle)).with_state(server.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (server, format!("http://{addr}/v1/completions"))
}

fn config(url: &str) -> BackendConfig {
    BackendConfig {
        endpoint_url: url.to_string(),
        model_name: "test-model".into(),
        retry: RetryPolicy { max_attempts: 3, base_backoff_ms: 1 },
        request_timeout_ms: 2_000,
        ..Default::default()
    }
}

fn live(cfg: &BackendConfig) -> Backend {
    Backend::Live(LiveBackend::with_key(cfg, "sk-test".into()).unwrap())
}

#[tokio::test]
async fn server_error_is_retried_once_and_recorded_once() {
    let (server, url) = serve(vec![Reply::Status(500), Reply::Ok]).await;
    let dir = tempfile::tempdir().unwrap();
    let cache = Arc::new(Cache::open(dir.path().join("c.jsonl")).unwrap());
    let client = Client::new(live(&config(&url)), Some(cache.clone()));

    let d = client.complete("Is nurse a word?", DecodeParams::new(1)).await.unwrap();
    assert_eq!(d[0].entries[0].0, " yes");
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
    assert_eq!(client.backend_calls(), 1);
    assert_eq!(cache.len(), 1);
    let lines = std::fs::read_to_string(cache.path()).unwrap().lines().count();
    assert_eq!(lines, 1);

    let body = server.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["max_tokens"], 1);
    assert_eq!(body["logprobs"], 5);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(server.auth.lock().unwrap()[0], "Bearer sk-test");
}

#[tokio::test]
async fn rate_limit_is_retried() {
    let (server, url) = serve(vec![Reply::Status(429), Reply::Status(503), Reply::Ok]).await;
    let client = Client::new(live(&config(&url)), None);
    assert!(client.complete("p", DecodeParams::new(1)).await.is_ok());
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn client_errors_fail_fast() {
    let (server, url) = serve(vec![Reply::Status(400), Reply::Ok]).await;
    let client = Client::new(live(&config(&url)), None);
    let err = client.complete("p", DecodeParams::new(1)).await.unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 400, .. }), "{err:?}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn retries_stop_at_the_attempt_limit() {
    let (server, url) = serve(vec![Reply::Status(500); 10]).await;
    let client = Client::new(live(&config(&url)), None);
    let err = client.complete("p", DecodeParams::new(1)).await.unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 500, .. }));
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn malformed_body_is_not_retried() {
    let (server, url) = serve(vec![Reply::Garbage, Reply::Ok]).await;
    let client = Client::new(live(&config(&url)), None);
    assert!(matches!(client.complete("p", DecodeParams::new(1)).await, Err(BackendError::Malformed(_))));
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn timeouts_are_retried() {
    let (server, url) = serve(vec![Reply::Slow(1_000), Reply::Ok]).await;
    let mut cfg = config(&url);
    cfg.request_timeout_ms = 100;
    let client = Client::new(live(&cfg), None);
    assert!(client.complete("p", DecodeParams::new(1)).await.is_ok());
    assert_eq!(server.hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn cached_rerun_makes_no_requests() {
    let (server, url) = serve(vec![]).await;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let jobs: Vec<(String, DecodeParams)> = (0..12).map(|i| (format!("prompt {i}"), DecodeParams::new(1))).collect();
    let cfg = config(&url);
    {
        let client = Client::new(live(&cfg), Some(Arc::new(Cache::open(&path).unwrap())));
        let r = dispatch(&client, &jobs, DispatchOptions::from(&cfg)).await.unwrap();
        assert_eq!(r.failures, 0);
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 12);
    let client = Client::new(live(&cfg), Some(Arc::new(Cache::open(&path).unwrap())));
    let r = dispatch(&client, &jobs, DispatchOptions::from(&cfg)).await.unwrap();
    assert!(r.outcomes.iter().all(Result::is_ok));
    assert_eq!(server.hits.load(Ordering::SeqCst), 12);
    assert_eq!(client.backend_calls(), 0);
    assert_eq!(client.cache_hits(), 12);
}

#[tokio::test]
async fn in_flight_bound_is_respected() {
    for limit in [1usize, 3] {
        let (server, url) = serve(vec![]).await;
        server.delay_ms.store(20, Ordering::SeqCst);
        let cfg = config(&url);
        let client = Client::new(live(&cfg), None);
        let jobs: Vec<(String, DecodeParams)> = (0..9).map(|i| (format!("q{i}"), DecodeParams::new(1))).collect();
        let opts = DispatchOptions { max_in_flight: limit, max_failure_rate: 0.0 };
        dispatch(&client, &jobs, opts).await.unwrap();
        let peak = server.peak.load(Ordering::SeqCst);
        assert!(peak <= limit, "limit {limit}, peak {peak}");
        if limit == 1 {
            assert_eq!(peak, 1);
        }
    }
}

#[tokio::test]
async fn failure_ceiling_aborts_dispatch() {
    let (server, url) = serve(vec![]).await;
    *server.fallback.lock().unwrap() = Some(Reply::Status(400));
    let cfg = config(&url);
    let client = Client::new(live(&cfg), None);
    let jobs: Vec<(String, DecodeParams)> = (0..20).map(|i| (format!("q{i}"), DecodeParams::new(1))).collect();
    let opts = DispatchOptions { max_in_flight: 1, max_failure_rate: 0.1 };
    let err = dispatch(&client, &jobs, opts).await.unwrap_err();
    assert!(matches!(err, BackendError::FailureCeiling { failed: 3, total: 20, .. }), "{err:?}");
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn failures_under_the_ceiling_are_reported() {
    let (_server, url) = serve(vec![Reply::Status(404)]).await;
    let cfg = config(&url);
    let client = Client::new(live(&cfg), None);
    let jobs: Vec<(String, DecodeParams)> = (0..10).map(|i| (format!("q{i}"), DecodeParams::new(1))).collect();
    let opts = DispatchOptions { max_in_flight: 1, max_failure_rate: 0.1 };
    let r = dispatch(&client, &jobs, opts).await.unwrap();
    assert_eq!(r.failures, 1);
    assert!(r.outcomes[0].is_err());
}
