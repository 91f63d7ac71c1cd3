use std::collections::HashMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use super::runtime::Runtime;
use super::store::{SessionStore, StoreError};
use super::view::SessionSnapshot;
use super::ServerError;
use crate::llm::Cassette;
use crate::protocol::{PromptWidget, ProtocolError, Session};

const SHUTDOWN_GRACE: Duration = Duration::from_secs(10);

struct Work {
    session: Session,
    cassette: Cassette,
}

/// One live session. `work` serializes protocol operations; `view` fans the
/// latest persisted state out to readers.
struct Slot {
    work: tokio::sync::Mutex<Work>,
    view: watch::Sender<Arc<Session>>,
}

pub struct AppState {
    runtime: Arc<Runtime>,
    store: SessionStore,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
    shutdown: watch::Receiver<bool>,
}

impl AppState {
    /// Persist first, then publish, so nothing reaches a stream before it
    /// is on disk.
    fn publish(&self, slot: &Slot, session: &Session) {
        if let Err(e) = self.store.save(session) {
            tracing::warn!(session = %session.id, "persisting session: {e}");
        }
        slot.view.send_replace(Arc::new(session.clone()));
    }

    fn insert(&self, session: Session, cassette: Cassette) -> Arc<Slot> {
        let (view, _) = watch::channel(Arc::new(session.clone()));
        let slot = Arc::new(Slot {
            work: tokio::sync::Mutex::new(Work { session, cassette }),
            view,
        });
        let id = slot.view.borrow().id.clone();
        self.slots.lock().expect("slots").insert(id, slot.clone());
        slot
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        if let Some(s) = self.slots.lock().expect("slots").get(id) {
            return Ok(s.clone());
        }
        let persisted = self.store.load(id).map_err(|e| match e {
            StoreError::NotFound(_) | StoreError::InvalidId(_) => {
                ApiError(StatusCode::NOT_FOUND, format!("no session '{id}'"))
            }
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?;
        let question = first_question(&persisted.session);
        let cassette = self
            .runtime
            .open_cassette(&question, persisted.cassette_position)
            .unwrap_or_else(|e| {
                tracing::warn!(session = id, "reopening cassette: {e}");
                Cassette::replay(Vec::new())
            });
        // Another request may have loaded it meanwhile; keep the first.
        let mut slots = self.slots.lock().expect("slots");
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        let (view, _) = watch::channel(Arc::new(persisted.session.clone()));
        let slot = Arc::new(Slot {
            work: tokio::sync::Mutex::new(Work {
                session: persisted.session,
                cassette,
            }),
            view,
        });
        slots.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    fn spawn(self: &Arc<Self>, slot: Arc<Slot>, input: Input) {
        let state = self.clone();
        let handle = tokio::spawn(async move { state.drive(slot, input).await });
        let mut tasks = self.tasks.lock().expect("tasks");
        tasks.retain(|t| !t.is_finished());
        tasks.push(handle);
    }

    async fn drive(&self, slot: Arc<Slot>, input: Input) {
        let mut guard = slot.work.lock().await;
        let Work { session, cassette } = &mut *guard;
        let engine = &self.runtime.engine;
        let applied = match input {
            Input::Start => Ok(()),
            Input::Text(text) => engine.user_message(session, &text),
            Input::Widget(kind, edited) => {
                engine.apply_prompt_widget(session, kind, edited.as_deref())
            }
        };
        if let Err(e) = applied {
            session.error = Some(e.to_string());
            self.publish(&slot, session);
            return;
        }
        self.publish(&slot, session);
        let result = engine
            .advance(session, cassette, |s| self.publish(&slot, s))
            .await;
        if let Err(e) = result {
            session.error = Some(e.to_string());
        }
        self.publish(&slot, session);
    }

    /// Wait for in-flight protocol work, then write every session once more.
    async fn flush(&self) {
        let tasks: Vec<JoinHandle<()>> = std::mem::take(&mut *self.tasks.lock().expect("tasks"));
        for t in tasks {
            let abort = t.abort_handle();
            if tokio::time::timeout(SHUTDOWN_GRACE, t).await.is_err() {
                abort.abort();
            }
        }
        let slots: Vec<Arc<Slot>> = self
            .slots
            .lock()
            .expect("slots")
            .values()
            .cloned()
            .collect();
        for slot in slots {
            let guard = slot.work.lock().await;
            if let Err(e) = self.store.save(&guard.session) {
                tracing::warn!(session = %guard.session.id, "flushing session: {e}");
            }
        }
    }
}

/// The question a session's cassette is keyed by: the first user message.
fn first_question(session: &Session) -> String {
    session
        .history
        .iter()
        .find(|m| m.role == crate::llm::Role::User)
        .map(|m| m.content.clone())
        .unwrap_or_else(|| session.question.clone())
}

enum Input {
    Start,
    Text(String),
    Widget(PromptWidget, Option<String>),
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn protocol_error(e: ProtocolError) -> ApiError {
    let status = match &e {
        ProtocolError::Validation(_) | ProtocolError::ActionParse(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ProtocolError::NotRunnable { .. } => StatusCode::CONFLICT,
        ProtocolError::Kg(_) | ProtocolError::Llm(_) => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    ApiError(status, e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    question: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct WidgetBody {
    kind: PromptWidget,
    #[serde(default)]
    edited_text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    widget: Option<WidgetBody>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryBody {
    sparql: String,
}

#[derive(Deserialize)]
struct EventsParams {
    #[serde(default)]
    from: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "kgBackend": state.runtime.kg.name(),
        "cassetteMode": state.runtime.mode(),
    }))
}

async fn create(
    State(state): State<Arc<AppState>>,
    Json(body): Json<CreateBody>,
) -> Result<impl IntoResponse, ApiError> {
    let engine = &state.runtime.engine;
    let session = engine
        .start_session(&body.question)
        .map_err(protocol_error)?;
    let cassette = state
        .runtime
        .open_cassette(&session.question, 0)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let id = session.id.clone();
    let slot = state.insert(session.clone(), cassette);
    state.publish(&slot, &session);
    state.spawn(slot, Input::Start);
    Ok((StatusCode::CREATED, Json(json!({ "sessionId": id }))))
}

async fn message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<impl IntoResponse, ApiError> {
    let input = match (body.text, body.widget) {
        (Some(t), None) if !t.trim().is_empty() => Input::Text(t),
        (None, Some(w)) => Input::Widget(w.kind, w.edited_text),
        _ => {
            return Err(ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                "send either non-empty `text` or `widget`".into(),
            ))
        }
    };
    let slot = state.slot(&id)?;
    state.spawn(slot, input);
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": true }))))
}

async fn snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.view.borrow().clone();
    Ok(Json(SessionSnapshot::of(&session)))
}

async fn execute(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    let slot = state.slot(&id)?;
    let mut guard = slot.work.lock().await;
    let Work { session, cassette } = &mut *guard;
    if session.generated_query.is_none() {
        return Err(ApiError(
            StatusCode::CONFLICT,
            "no query has been generated for this session yet".into(),
        ));
    }
    let result = state
        .runtime
        .engine
        .execute_and_summarize(session, cassette)
        .await;
    state.publish(&slot, session);
    result.map_err(protocol_error)?;
    Ok(Json(SessionSnapshot::of(session)))
}

async fn put_query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(body): Json<QueryBody>,
) -> Result<Json<SessionSnapshot>, ApiError> {
    let slot = state.slot(&id)?;
    let mut guard = slot.work.lock().await;
    let session = &mut guard.session;
    state
        .runtime
        .engine
        .set_user_query(session, &body.sparql)
        .await
        .map_err(protocol_error)?;
    state.publish(&slot, session);
    Ok(Json(SessionSnapshot::of(session)))
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(params): Query<EventsParams>,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    let rx = slot.view.subscribe();
    let shutdown = state.shutdown.clone();
    let stream = futures::stream::unfold(
        (rx, shutdown, params.from),
        |(mut rx, mut shutdown, next)| async move {
            loop {
                if *shutdown.borrow() {
                    return None;
                }
                let current = rx.borrow_and_update().clone();
                if current.events.len() > next {
                    let lines: String = current.events[next..]
                        .iter()
                        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
                        .collect();
                    let next = current.events.len();
                    return Some((Ok::<_, Infallible>(lines), (rx, shutdown, next)));
                }
                tokio::select! {
                    changed = rx.changed() => if changed.is_err() { return None },
                    _ = shutdown.changed() => return None,
                }
            }
        },
    );
    Ok(Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static headers"))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create))
        .route("/api/sessions/:id", get(snapshot))
        .route("/api/sessions/:id/message", post(message))
        .route("/api/sessions/:id/events", get(events))
        .route("/api/sessions/:id/execute", post(execute))
        .route("/api/sessions/:id/query", axum::routing::put(put_query))
        .with_state(state)
}

/// A bound, running server.
pub struct RunningServer {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: watch::Sender<bool>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting requests, close event streams, finish in-flight work
    /// and persist every session.
    pub async fn shutdown(self) -> Result<(), ServerError> {
        let _ = self.shutdown.send(true);
        let served = self
            .handle
            .await
            .map_err(|e| ServerError::Io(e.to_string()))?;
        self.state.flush().await;
        served.map_err(|e| ServerError::Io(e.to_string()))
    }
}

/// Bind `listen_address` and start serving in the background.
pub async fn start(runtime: Runtime) -> Result<RunningServer, ServerError> {
    let store = SessionStore::open(&runtime.config.session_store_dir)?;
    let listen = runtime.config.listen_address.clone();
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .map_err(|e| ServerError::Bind {
            addr: listen.clone(),
            message: e.to_string(),
        })?;
    let addr = listener
        .local_addr()
        .map_err(|e| ServerError::Io(e.to_string()))?;
    let (tx, rx) = watch::channel(false);
    let state = Arc::new(AppState {
        runtime: Arc::new(runtime),
        store,
        slots: Mutex::new(HashMap::new()),
        tasks: Mutex::new(Vec::new()),
        shutdown: rx.clone(),
    });
    let app = router(state.clone());
    let mut signal = rx;
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = signal.wait_for(|stop| *stop).await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(RunningServer {
        addr,
        state,
        shutdown: tx,
        handle,
    })
}

/// Serve until `signal` resolves, then shut down gracefully.
pub async fn serve(
    runtime: Runtime,
    signal: impl std::future::Future<Output = ()>,
) -> Result<(), ServerError> {
    let server = start(runtime).await?;
    signal.await;
    server.shutdown().await
}
