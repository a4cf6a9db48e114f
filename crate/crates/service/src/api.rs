//! Request and response bodies of the `/v1` routes.

use docent_core::dialogue::{SentimentClass, SentimentLevel};
use docent_core::fsm::InteractionState;
use docent_core::orchestrator::KindSummary;
use serde::{Deserialize, Serialize};

pub use crate::error::ErrorBody;
pub use crate::journal::Sequenced;

/// Which recognizer a session talks to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionMode {
    /// In-process fixtures with sampled latency on the simulated clock.
    #[default]
    Stub,
    /// The configured HTTP endpoint, timed on the wall clock.
    Http,
}

/// `POST /v1/sessions`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    /// `"<scenario>/<room>"`, e.g. `"garden/room1"`.
    pub binding: String,
    #[serde(default)]
    pub anchored: bool,
    /// Latency seed; the server default when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub vision: VisionMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHandle {
    pub id: String,
    pub binding: String,
    pub scenario: String,
    pub room: String,
    pub character: Option<String>,
    pub anchored: bool,
    pub seed: u64,
    pub vision: VisionMode,
    /// Unix time in seconds.
    pub created_at: f64,
}

/// `GET /v1/sessions/{id}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    #[serde(flatten)]
    pub handle: SessionHandle,
    pub state: InteractionState,
    pub clock: f64,
    pub active_room: Option<String>,
    pub loaded_anchors: usize,
    pub ended: bool,
    pub last_seq: u64,
}

/// Reply to every accepted input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    /// Sequence number of the last output produced so far.
    pub last_seq: u64,
    pub state: InteractionState,
}

/// `POST /v1/sessions/{id}/room`: a camera view to recognise, or labels
/// already known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoomRequest {
    View { scene_ref: String },
    Labels { labels: Vec<String> },
}

/// `POST /v1/sessions/{id}/camera`: the object the headset points at when
/// no gaze ray is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRequest {
    pub facing: Option<String>,
}

/// `GET /v1/sessions/{id}/events` and `/history`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FromQuery {
    #[serde(default)]
    pub from: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPage {
    pub events: Vec<Sequenced>,
    pub last_seq: u64,
}

/// `POST /v1/chat`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub text: String,
    #[serde(default)]
    pub object: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: String,
    pub sentiment_class: SentimentClass,
    pub sentiment_level: SentimentLevel,
}

/// `GET /v1/metrics`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub queries: usize,
    pub summaries: Vec<KindSummary>,
}
