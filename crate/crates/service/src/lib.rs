//! JSON-over-HTTP facade for chat sessions.
//!
//! Routes:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/api/sessions` | `{engine, seed?}` |
//! | GET | `/api/sessions/{id}` | |
//! | POST | `/api/sessions/{id}/messages` | `{text}` |
//! | POST | `/api/sessions/{id}/rephrase` | `{choice}` |
//! | POST | `/api/sessions/{id}/misread` | `{}` |
//! | GET | `/api/health` | |
//!
//! There is no authentication. Do not expose this server to the internet
//! without putting an authenticating proxy in front of it.

mod error;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard, Semaphore};
use warmline_core::dialogue::{
    handle_rephrase, respond, signal_misread, Clock, DialogueContext, RephraseChoice, ReplyGenerator, SystemClock,
    TranscriptEvent,
};
use warmline_core::{BotReply, Detectors, Engine, ResponsePools, Session, SessionState};

pub use error::ApiError;
pub use store::{FileStore, MemoryStore, SessionStore};

/// Everything a dialogue turn needs, shared by all sessions.
pub struct Backend {
    pub detectors: Arc<dyn Detectors>,
    pub pools: Arc<ResponsePools>,
    pub generator: Option<Arc<dyn ReplyGenerator>>,
    pub clock: Arc<dyn Clock>,
    pub max_label_replies: usize,
}

impl Backend {
    pub fn new(detectors: Arc<dyn Detectors>, pools: Arc<ResponsePools>) -> Self {
        Self {
            detectors,
            pools,
            generator: None,
            clock: Arc::new(SystemClock),
            max_label_replies: warmline_core::dialogue::MAX_LABEL_REPLIES,
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn ReplyGenerator>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_max_label_replies(mut self, n: usize) -> Self {
        self.max_label_replies = n;
        self
    }

    fn context(&self) -> DialogueContext<'_> {
        let ctx = DialogueContext::new(self.detectors.as_ref(), self.pools.as_ref(), self.clock.as_ref())
            .with_max_label_replies(self.max_label_replies);
        match &self.generator {
            Some(g) => ctx.with_generator(g.as_ref()),
            None => ctx,
        }
    }
}

type SessionSlot = Arc<AsyncMutex<Session>>;

pub struct AppState {
    backend: Arc<Backend>,
    store: Arc<dyn SessionStore>,
    sessions: Mutex<HashMap<String, SessionSlot>>,
    generation: Arc<Semaphore>,
    default_engine: Engine,
}

impl AppState {
    pub fn new(backend: Backend, store: Arc<dyn SessionStore>) -> Self {
        let permits = backend.generator.as_ref().map(|g| g.capacity().max(1)).unwrap_or(1);
        Self {
            backend: Arc::new(backend),
            store,
            sessions: Mutex::new(HashMap::new()),
            generation: Arc::new(Semaphore::new(permits)),
            default_engine: Engine::RuleBased,
        }
    }

    pub fn with_default_engine(mut self, engine: Engine) -> Self {
        self.default_engine = engine;
        self
    }

    /// The in-memory slot for `id`, loading it from the store on first use.
    async fn slot(&self, id: &str) -> Result<SessionSlot, ApiError> {
        if let Some(s) = self.sessions.lock().expect("sessions lock").get(id) {
            return Ok(s.clone());
        }
        let store = self.store.clone();
        let key = id.to_string();
        let loaded = tokio::task::spawn_blocking(move || store.load(&key))
            .await
            .map_err(ApiError::internal)??;
        let session = loaded.ok_or_else(|| ApiError::not_found(id))?;
        let mut map = self.sessions.lock().expect("sessions lock");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(AsyncMutex::new(session)))
            .clone())
    }
}

#[derive(Debug, Deserialize)]
struct CreateRequest {
    engine: Option<String>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub engine: Engine,
    pub state: SessionState,
    pub disclaimer: String,
}

#[derive(Debug, Deserialize)]
struct MessageRequest {
    text: String,
}

#[derive(Debug, Deserialize)]
struct RephraseRequest {
    choice: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReplyResponse {
    pub reply: BotReply,
    pub state: SessionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety: Option<String>,
    pub flagged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub engine: Engine,
    pub state: SessionState,
    pub created_at: String,
    pub flagged: bool,
    pub transcript: Vec<TranscriptEvent>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub detectors: String,
    pub generator: Option<String>,
    pub engines: Vec<Engine>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(ApiError::from)
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let req = body(payload)?;
    let engine = match req.engine.as_deref() {
        None => app.default_engine,
        Some(name) => name.parse::<Engine>().map_err(ApiError::from)?,
    };
    if engine == Engine::Generative && app.backend.generator.is_none() {
        return Err(ApiError::unprocessable("generative engine is not configured on this server"));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let seed = req.seed.unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0);
    let session = Session::new(id.clone(), engine, seed, app.backend.clock.now());
    let store = app.store.clone();
    let persisted = session.clone();
    tokio::task::spawn_blocking(move || store.create(&persisted))
        .await
        .map_err(ApiError::internal)??;
    let response = CreateResponse {
        session_id: id.clone(),
        engine,
        state: session.state,
        disclaimer: app.backend.pools.templates.disclaimer.clone(),
    };
    app.sessions
        .lock()
        .expect("sessions lock")
        .insert(id, Arc::new(AsyncMutex::new(session)));
    tracing::info!(session = %response.session_id, engine = %engine.as_str(), "session created");
    Ok((StatusCode::CREATED, Json(response)))
}

/// Runs one dialogue operation on the locked session off the async
/// runtime, then persists the new events before answering.
async fn exchange<F>(app: &Arc<AppState>, id: &str, op: F) -> Result<Json<ReplyResponse>, ApiError>
where
    F: FnOnce(&mut Session, &DialogueContext<'_>) -> warmline_core::Result<BotReply> + Send + 'static,
{
    let slot = app.slot(id).await?;
    let guard: OwnedMutexGuard<Session> = slot.lock_owned().await;
    let _permit = if guard.engine == Engine::Generative {
        Some(app.generation.clone().acquire_owned().await.map_err(ApiError::internal)?)
    } else {
        None
    };
    let backend = app.backend.clone();
    let store = app.store.clone();
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        let before = guard.transcript.len();
        let snapshot = guard.clone();
        let reply = op(&mut guard, &backend.context())?;
        if let Err(e) = store.append(&guard, before) {
            *guard = snapshot;
            return Err(ApiError::from(e));
        }
        let escalated = guard.state == SessionState::Escalated && reply.is_escalation();
        Ok(Json(ReplyResponse {
            safety: escalated.then(|| "escalated".to_string()),
            state: guard.state,
            flagged: guard.flagged,
            reply,
        }))
    })
    .await
    .map_err(ApiError::internal)?
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<MessageRequest>, JsonRejection>,
) -> Result<Json<ReplyResponse>, ApiError> {
    let req = body(payload)?;
    if req.text.trim().is_empty() {
        return Err(ApiError::unprocessable("message text is empty"));
    }
    exchange(&app, &id, move |s, ctx| respond(s, &req.text, ctx)).await
}

async fn post_rephrase(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<RephraseRequest>, JsonRejection>,
) -> Result<Json<ReplyResponse>, ApiError> {
    let choice: RephraseChoice = body(payload)?.choice.parse().map_err(ApiError::from)?;
    exchange(&app, &id, move |s, ctx| handle_rephrase(s, choice, ctx)).await
}

async fn post_misread(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ReplyResponse>, ApiError> {
    exchange(&app, &id, signal_misread).await
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    let slot = app.slot(&id).await?;
    let s = slot.lock().await;
    Ok(Json(SessionRecord {
        session_id: s.id.clone(),
        engine: s.engine,
        state: s.state,
        created_at: s.created_at.clone(),
        flagged: s.flagged,
        transcript: s.transcript.clone(),
    }))
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    let mut engines = vec![Engine::Baseline, Engine::RuleBased];
    if app.backend.generator.is_some() {
        engines.push(Engine::Generative);
    }
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        detectors: app.backend.detectors.fingerprint(),
        generator: app.backend.generator.as_ref().map(|g| g.name().to_string()),
        engines,
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/rephrase", post(post_rephrase))
        .route("/api/sessions/{id}/misread", post(post_misread))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
