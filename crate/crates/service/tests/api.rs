use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use warmline_core::corpus::Speaker;
use warmline_core::dialogue::{respond, DialogueContext, FixedClock, ReplyGenerator};
use warmline_core::synth::MarkerDetectors;
use warmline_core::{Engine, ResponsePools, Session};
use warmline_service::{router, AppState, Backend, FileStore, MemoryStore, SessionStore};

fn backend() -> Backend {
    Backend::new(Arc::new(MarkerDetectors::default()), Arc::new(ResponsePools::builtin()))
        .with_clock(Arc::new(FixedClock::default()))
}

fn app_with(store: Arc<dyn SessionStore>, backend: Backend) -> Router {
    router(Arc::new(AppState::new(backend, store)))
}

fn app() -> Router {
    app_with(Arc::new(MemoryStore::default()), backend())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn create(app: &Router, engine: &str, seed: u64) -> String {
    let (st, v) = call(app, "POST", "/api/sessions", Some(json!({"engine": engine, "seed": seed}))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn say(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/api/sessions/{id}/messages"), Some(json!({ "text": text }))).await
}

#[tokio::test]
async fn create_sessions() {
    let app = app();
    let (st, v) = call(&app, "POST", "/api/sessions", Some(json!({"engine": "baseline"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(v["state"], "open");
    assert!(v["disclaimer"].as_str().unwrap().contains("not a medical professional"));
    let a = create(&app, "baseline", 1).await;
    let b = create(&app, "rule_based", 1).await;
    assert_ne!(a, b);

    let (st, v) = call(&app, "POST", "/api/sessions", Some(json!({"engine": "oracle"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "invalid_input");
    assert!(v["detail"].is_string());

    let (st, _) = call(&app, "POST", "/api/sessions", Some(json!({"engine": "generative"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn content_type_and_malformed_bodies() {
    let app = app();
    let req = Request::builder()
        .method("POST")
        .uri("/api/sessions")
        .header("content-type", "text/plain")
        .body(Body::from("{}"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let req = Request::builder()
        .method("POST")
        .uri("/api/sessions")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let id = create(&app, "baseline", 1).await;
    let (st, _) = call(&app, "POST", &format!("/api/sessions/{id}/messages"), Some(json!({"txt": "hi"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn escalation_then_conflict() {
    let app = app();
    let id = create(&app, "baseline", 3).await;
    let (st, v) = say(&app, &id, "I feel unsafe tonight").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["safety"], "escalated");
    assert_eq!(v["state"], "escalated");
    assert!(v["reply"]["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .all(|s| s["kind"] == "escalation"));
    let (st, v) = say(&app, &id, "hello again").await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["error"], "invalid_state");
    let (st, _) = call(&app, "POST", &format!("/api/sessions/{id}/misread"), None).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn rephrase_loop_and_close() {
    let app = app();
    let id = create(&app, "rule_based", 4).await;
    let (_, v) = say(&app, &id, "plain words").await;
    assert_eq!(v["state"], "awaiting_rephrase");
    let kinds: Vec<&str> = v["reply"]["sentences"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.contains(&"failure_notice"));
    assert!(v.get("safety").is_none());

    let (st, v) = call(&app, "POST", &format!("/api/sessions/{id}/rephrase"), Some(json!({"choice": "rephrase"}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["state"], "open");

    let (st, _) = call(&app, "POST", &format!("/api/sessions/{id}/rephrase"), Some(json!({"choice": "stop"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);

    say(&app, &id, "more plain words").await;
    let (st, _) = call(&app, "POST", &format!("/api/sessions/{id}/rephrase"), Some(json!({"choice": "maybe"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, v) = call(&app, "POST", &format!("/api/sessions/{id}/rephrase"), Some(json!({"choice": "stop"}))).await;
    assert_eq!(v["state"], "closed");
    assert_eq!(say(&app, &id, "hi").await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn misread_asks_for_new_text() {
    let app = app();
    let id = create(&app, "rule_based", 4).await;
    let (_, v) = say(&app, &id, "my husband").await;
    assert_eq!(v["state"], "open");
    let (st, v) = call(&app, "POST", &format!("/api/sessions/{id}/misread"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["state"], "awaiting_rephrase");
}

#[tokio::test]
async fn errors_and_transcripts() {
    let app = app();
    assert_eq!(call(&app, "GET", "/api/sessions/missing", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(say(&app, "missing", "hi").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/nothing", None).await.0, StatusCode::NOT_FOUND);

    let id = create(&app, "baseline", 5).await;
    assert_eq!(say(&app, &id, "   ").await.0, StatusCode::UNPROCESSABLE_ENTITY);
    for t in ["one", "two", "three"] {
        assert_eq!(say(&app, &id, t).await.0, StatusCode::OK);
    }
    let (st, v) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    let events = v["transcript"].as_array().unwrap();
    assert_eq!(events.len(), 6);
    for (i, e) in events.iter().enumerate() {
        assert_eq!(e["seq"], i);
        assert_eq!(e["type"], if i % 2 == 0 { "user_message" } else { "bot_reply" });
    }
    assert_eq!(events[4]["text"], "three");
}

#[tokio::test]
async fn health_reports_detector_fingerprint() {
    let (st, v) = call(&app(), "GET", "/api/health", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["detectors"], "synthetic-markers");
    assert_eq!(v["engines"], json!(["baseline", "rule_based"]));
}

#[tokio::test]
async fn service_adds_no_sentences() {
    let app = app();
    let id = create(&app, "rule_based", 77).await;
    let texts = ["my husband and the bills", "i am anxious", "naps and colic", "hopeless"];
    let mut served = Vec::new();
    for t in texts {
        served.push(say(&app, &id, t).await.1["reply"].clone());
    }
    let pools = ResponsePools::builtin();
    let det = MarkerDetectors::default();
    let clock = FixedClock::default();
    let ctx = DialogueContext::new(&det, &pools, &clock);
    let mut s = Session::new(id, Engine::RuleBased, 77, "t".into());
    for (t, got) in texts.iter().zip(served) {
        let want = respond(&mut s, t, &ctx).unwrap();
        assert_eq!(serde_json::to_value(want).unwrap(), got);
    }
}

fn fresh_file_app(dir: &Path) -> Router {
    app_with(Arc::new(FileStore::open(dir).unwrap()), backend())
}

#[tokio::test]
async fn crash_restart_keeps_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let (open_id, esc_id, before_open, before_esc) = {
        let app = fresh_file_app(dir.path());
        let open_id = create(&app, "rule_based", 8).await;
        say(&app, &open_id, "my husband").await;
        say(&app, &open_id, "plain words").await;
        let esc_id = create(&app, "baseline", 9).await;
        say(&app, &esc_id, "the bills").await;
        say(&app, &esc_id, "i am unsafe").await;
        let a = call(&app, "GET", &format!("/api/sessions/{open_id}"), None).await.1;
        let b = call(&app, "GET", &format!("/api/sessions/{esc_id}"), None).await.1;
        (open_id, esc_id, a, b)
    };
    let app = fresh_file_app(dir.path());
    let after_open = call(&app, "GET", &format!("/api/sessions/{open_id}"), None).await.1;
    let after_esc = call(&app, "GET", &format!("/api/sessions/{esc_id}"), None).await.1;
    assert_eq!(after_open, before_open);
    assert_eq!(after_esc, before_esc);
    assert_eq!(after_esc["state"], "escalated");
    assert_eq!(say(&app, &esc_id, "hello").await.0, StatusCode::CONFLICT);
    let (st, v) = call(&app, "POST", &format!("/api/sessions/{open_id}/rephrase"), Some(json!({"choice": "rephrase"}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["state"], "open");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_messages_are_serialized() {
    let app = app();
    let id = create(&app, "baseline", 10).await;
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            let id = id.clone();
            tokio::spawn(async move { say(&app, &id, &format!("message {i}")).await.0 })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    let v = call(&app, "GET", &format!("/api/sessions/{id}"), None).await.1;
    let events = v["transcript"].as_array().unwrap();
    assert_eq!(events.len(), 32);
    for pair in events.chunks(2) {
        assert_eq!(pair[0]["type"], "user_message");
        assert_eq!(pair[1]["type"], "bot_reply");
        assert_eq!(pair[1]["seq"].as_u64().unwrap(), pair[0]["seq"].as_u64().unwrap() + 1);
    }
}

struct SlowGenerator {
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl ReplyGenerator for SlowGenerator {
    fn name(&self) -> &str {
        "slow"
    }

    fn capacity(&self) -> usize {
        2
    }

    fn generate(&self, _context: &[(Speaker, String)], _seed: u64) -> warmline_core::Result<String> {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(30));
        self.active.fetch_sub(1, Ordering::SeqCst);
        Ok("That sounds hard. What has helped?".into())
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn generative_capacity_is_honoured() {
    let generator = Arc::new(SlowGenerator {
        active: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    });
    let app = app_with(Arc::new(MemoryStore::default()), backend().with_generator(generator.clone()));
    let mut ids = Vec::new();
    for i in 0..8 {
        ids.push(create(&app, "generative", i).await);
    }
    let handles: Vec<_> = ids
        .into_iter()
        .map(|id| {
            let app = app.clone();
            tokio::spawn(async move { say(&app, &id, "long day").await })
        })
        .collect();
    for h in handles {
        let (st, v) = h.await.unwrap();
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["reply"]["engine"], "generative");
    }
    assert!(generator.peak.load(Ordering::SeqCst) <= 2);
}
