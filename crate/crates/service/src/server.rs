use std::collections::{BTreeMap, VecDeque};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::routing::{get, post};
use axum::{Json, Router};
use docent_core::anchor::AnchorStore;
use docent_core::dialogue::{respond, DialogueContext, KnowledgeBase, SentimentLexicon};
use docent_core::fixtures;
use docent_core::fsm::{TraceRecord, UserEvent};
use docent_core::latency::{stream_seed, LatencyModel};
use docent_core::orchestrator::{EngineConfig, RoomObservation, SharedMetricsLog};
use docent_core::composer::PerformanceAssets;
use docent_core::sim::{anchored_variant, build_store, scene_fixtures, Scenario, StubBackend};
use docent_core::vision::{RecognitionRequest, RecognitionResult, StubEndpoint};
use futures::stream::{self, Stream};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};
use tracing::info;

use crate::actor::{Actor, Command, Status};
use crate::api::*;
use crate::error::ServiceError;
use crate::journal::{Journal, Sequenced, DEFAULT_HISTORY_CAP};

/// Everything a server instance needs.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub latency: LatencyModel,
    /// Rooms sessions can bind to, as `"<name>/<room>"`.
    pub scenario: Scenario,
    /// Seed for sessions that do not bring their own.
    pub seed: u64,
    pub history_cap: usize,
    /// Factor on the sampled delay of `/v1/recognize` (0 answers at once).
    pub recognize_time_scale: f64,
}

impl ServiceConfig {
    /// The bundled garden with calibrated latencies.
    pub fn garden() -> Self {
        Self {
            engine: EngineConfig::default(),
            latency: LatencyModel::calibrated(),
            scenario: fixtures::garden_scenario(),
            seed: 42,
            history_cap: DEFAULT_HISTORY_CAP,
            recognize_time_scale: 1.0,
        }
    }
}

struct Entry {
    handle: SessionHandle,
    inbox: mpsc::Sender<Command>,
    journal: Arc<Journal>,
}

struct Inner {
    config: ServiceConfig,
    engine: Arc<EngineConfig>,
    assets: Arc<PerformanceAssets>,
    kb: Arc<KnowledgeBase>,
    lexicon: Arc<SentimentLexicon>,
    fixtures: BTreeMap<String, RecognitionResult>,
    plain_store: Arc<AnchorStore>,
    anchored_store: Arc<AnchorStore>,
    recognizer: Mutex<StubEndpoint>,
    metrics: SharedMetricsLog,
    sessions: Mutex<BTreeMap<String, Entry>>,
    next_id: AtomicU64,
}

/// Shared server state; cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let invalid = |e: String| ServiceError::Unavailable(e);
        config.scenario.validate().map_err(|e| invalid(e.to_string()))?;
        config.latency.validate().map_err(|e| invalid(e.to_string()))?;
        config.engine.validate().map_err(|e| invalid(e.to_string()))?;
        config.engine.check_processing(&config.latency.processing).map_err(|e| invalid(e.to_string()))?;

        let fixtures = scene_fixtures(&config.scenario);
        let engine = &config.engine;
        let store = |scenario: &Scenario| {
            build_store(scenario, &fixtures, engine.anchor_radius, engine.placement_threshold)
                .map(Arc::new)
                .map_err(|e| invalid(e.to_string()))
        };
        let plain_store = store(&Scenario { anchored: false, ..config.scenario.clone() })?;
        let anchored_store = store(&anchored_variant(&config.scenario))?;
        let recognizer =
            StubEndpoint::new(fixtures.clone(), config.latency.vision, stream_seed(config.seed, "recognize"));
        Ok(Self {
            inner: Arc::new(Inner {
                engine: Arc::new(config.engine.clone()),
                assets: Arc::new(fixtures::performance_assets()),
                kb: Arc::new(fixtures::knowledge_base()),
                lexicon: Arc::new(fixtures::sentiment_lexicon()),
                fixtures,
                plain_store,
                anchored_store,
                recognizer: Mutex::new(recognizer),
                metrics: SharedMetricsLog::default(),
                sessions: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
                config,
            }),
        })
    }

    pub fn metrics(&self) -> &SharedMetricsLog {
        &self.inner.metrics
    }

    fn create(&self, request: CreateSession) -> Result<SessionHandle, ServiceError> {
        let inner = &self.inner;
        let scenario = &inner.config.scenario;
        let room = request
            .binding
            .split_once('/')
            .filter(|(name, _)| *name == scenario.name)
            .and_then(|(_, room)| scenario.room(room))
            .ok_or_else(|| ServiceError::UnknownScenario(request.binding.clone()))?;

        let id = format!("sess-{:04}", inner.next_id.fetch_add(1, Ordering::SeqCst));
        let seed = request.seed.unwrap_or(inner.config.seed);
        let backend = StubBackend::new(
            inner.fixtures.clone(),
            inner.kb.clone(),
            inner.lexicon.clone(),
            &inner.config.latency,
            inner.engine.vision.timeout,
            seed,
        );
        let (session, hello) = docent_core::orchestrator::Session::new(id.clone(), inner.engine.clone(), inner.assets.clone());
        let journal = Arc::new(Journal::new(inner.config.history_cap));
        journal.publish(hello);
        let actor = Actor {
            session,
            services: backend.services(room),
            http_vision: (request.vision == VisionMode::Http).then(|| inner.engine.vision.clone()),
            store: if request.anchored { inner.anchored_store.clone() } else { inner.plain_store.clone() },
            journal: journal.clone(),
            metrics: inner.metrics.clone(),
        };
        let handle = SessionHandle {
            id: id.clone(),
            binding: request.binding,
            scenario: scenario.name.clone(),
            room: room.room_id.clone(),
            character: scenario.characters.get(&room.room_id).cloned(),
            anchored: request.anchored,
            seed,
            vision: request.vision,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64()),
        };
        let entry = Entry { handle: handle.clone(), inbox: actor.spawn(), journal };
        inner.sessions.lock().expect("registry poisoned").insert(id.clone(), entry);
        info!(session = %id, room = %handle.room, anchored = handle.anchored, "session created");
        Ok(handle)
    }

    fn lookup(&self, id: &str) -> Result<(SessionHandle, mpsc::Sender<Command>, Arc<Journal>), ServiceError> {
        let sessions = self.inner.sessions.lock().expect("registry poisoned");
        let entry = sessions.get(id).ok_or_else(|| ServiceError::UnknownSession(id.to_owned()))?;
        Ok((entry.handle.clone(), entry.inbox.clone(), entry.journal.clone()))
    }

    async fn ask<T>(&self, id: &str, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ServiceError> {
        let (_, inbox, _) = self.lookup(id)?;
        let (tx, rx) = oneshot::channel();
        let gone = || ServiceError::Unavailable(format!("session {id:?} stopped"));
        inbox.send(make(tx)).map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }
}

/// The `/v1` router.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_status))
        .route("/v1/sessions/{id}/events", post(post_event).get(stream_events))
        .route("/v1/sessions/{id}/room", post(post_room))
        .route("/v1/sessions/{id}/camera", post(post_camera))
        .route("/v1/sessions/{id}/history", get(history))
        .route("/v1/sessions/{id}/trace", get(trace))
        .route("/v1/chat", post(chat))
        .route("/v1/recognize", post(recognize))
        .route("/v1/metrics", get(metrics))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::MalformedEvent(e.to_string()))
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Json<SessionHandle>, ServiceError> {
    Ok(Json(state.create(parse(&body)?)?))
}

async fn session_status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStatus>, ServiceError> {
    let (handle, _, journal) = state.lookup(&id)?;
    let status: Status = state.ask(&id, Command::Status).await?;
    Ok(Json(SessionStatus {
        handle,
        state: status.state,
        clock: status.clock,
        active_room: status.active_room,
        loaded_anchors: status.loaded_anchors,
        ended: status.ended,
        last_seq: journal.last_seq(),
    }))
}

async fn post_event(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Accepted>, ServiceError> {
    state.lookup(&id)?;
    let event: UserEvent = parse(&body)?;
    state.ask(&id, |reply| Command::Event(event, reply)).await?.map(Json)
}

async fn post_room(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Accepted>, ServiceError> {
    state.lookup(&id)?;
    let observation = match parse(&body)? {
        RoomRequest::View { scene_ref } => RoomObservation::View(RecognitionRequest { scene_ref }),
        RoomRequest::Labels { labels } => RoomObservation::Labels(labels.into_iter().collect()),
    };
    state.ask(&id, |reply| Command::Room(observation, reply)).await?.map(Json)
}

async fn post_camera(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Accepted>, ServiceError> {
    state.lookup(&id)?;
    let CameraRequest { facing } = parse(&body)?;
    state.ask(&id, |reply| Command::Facing(facing, reply)).await?.map(Json)
}

async fn history(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<FromQuery>,
) -> Result<Json<HistoryPage>, ServiceError> {
    let (_, _, journal) = state.lookup(&id)?;
    Ok(Json(HistoryPage { events: journal.since(query.from), last_seq: journal.last_seq() }))
}

async fn trace(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<TraceRecord>>, ServiceError> {
    state.ask(&id, Command::Trace).await.map(Json)
}

/// Replays stored events from the cursor, then follows live ones; finishes
/// after `SessionEnded`.
struct Cursor {
    backlog: VecDeque<Sequenced>,
    live: broadcast::Receiver<Sequenced>,
    journal: Arc<Journal>,
    next: u64,
    done: bool,
}

impl Cursor {
    async fn next_event(&mut self) -> Option<Sequenced> {
        loop {
            if self.done {
                return None;
            }
            if let Some(event) = self.backlog.pop_front() {
                if event.seq < self.next {
                    continue;
                }
                self.next = event.seq + 1;
                self.done = event.is_end();
                return Some(event);
            }
            match self.live.recv().await {
                Ok(event) => self.backlog.push_back(event),
                Err(broadcast::error::RecvError::Lagged(_)) => self.backlog = self.journal.since(self.next).into(),
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    }
}

async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<FromQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ServiceError> {
    let (_, _, journal) = state.lookup(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|last| last + 1);
    let from = resume.map_or(query.from, |r| r.max(query.from));
    let (backlog, live) = journal.subscribe(from);
    let cursor = Cursor { backlog: backlog.into(), live, journal, next: from, done: false };
    let events = stream::unfold(cursor, |mut cursor| async move {
        let event = cursor.next_event().await?;
        let sse = Event::default()
            .id(event.seq.to_string())
            .event(event.kind())
            .json_data(&event)
            .expect("events serialize");
        Some((Ok(sse), cursor))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn chat(State(state): State<AppState>, body: Bytes) -> Result<Json<ChatResponse>, ServiceError> {
    let request: ChatRequest = parse(&body)?;
    if request.text.trim().is_empty() {
        return Err(ServiceError::MalformedEvent("text is empty".into()));
    }
    let query = docent_core::dialogue::Query { text: request.text, object: request.object };
    let (reply, _) = respond(&query, &DialogueContext::default(), &state.inner.kb, &state.inner.lexicon);
    Ok(Json(ChatResponse {
        reply: reply.text,
        sentiment_class: reply.sentiment_class,
        sentiment_level: reply.sentiment_level,
    }))
}

/// Stub recognition endpoint: fixture lookup after the sampled delay.
async fn recognize(State(state): State<AppState>, body: Bytes) -> Result<Json<RecognitionResult>, ServiceError> {
    let request: RecognitionRequest = parse(&body)?;
    let (result, latency) = state.inner.recognizer.lock().expect("recognizer poisoned").handle(&request.scene_ref);
    let delay = latency * state.inner.config.recognize_time_scale;
    if delay > 0.0 {
        tokio::time::sleep(Duration::from_secs_f64(delay)).await;
    }
    Ok(Json(result))
}

async fn metrics(State(state): State<AppState>) -> Json<MetricsView> {
    let log = &state.inner.metrics;
    Json(MetricsView { queries: log.snapshot().len(), summaries: log.summaries() })
}
