//! Module manager: owns a session and routes interaction-machine actions
//! through anchors, recognition, the chatbot and the composer.
//!
//! Service round trips are synchronous calls that report how long they took;
//! their results are scheduled on the session's simulated clock and released
//! by later ticks. Live and simulated sessions share this one code path.

mod config;
mod metrics;
mod services;
mod session;

pub use config::{ConfigError, EngineConfig};
pub use metrics::{aggregate_metrics, KindSummary, QueryKind, QueryMetrics, QueryRecord, SharedMetricsLog};
pub use services::{ChatError, ChatOutcome, ChatService, LocalChatbot, SceneCamera, SceneObject, Services};
pub use session::{OutputEvent, RoomObservation, Session, SessionError, TimedOutput};
