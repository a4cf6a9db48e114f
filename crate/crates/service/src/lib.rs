//! HTTP front end for live sessions.
//!
//! Every session runs on its own thread and owns its state; requests reach
//! it through an inbox, so events are applied strictly in arrival order.
//! Outputs are numbered from 1 and kept in a bounded journal that backs both
//! the history endpoint and the resumable event stream.
//!
//! Routes (all under `/v1`):
//!
//! ```text
//! POST /v1/sessions                    create {binding, anchored?, seed?, vision?}
//! GET  /v1/sessions/{id}               handle + current state
//! POST /v1/sessions/{id}/events        one UserEvent
//! POST /v1/sessions/{id}/room          {scene_ref} or {labels}
//! POST /v1/sessions/{id}/camera        {facing}
//! GET  /v1/sessions/{id}/events?from=N server-sent events, replay then live
//! GET  /v1/sessions/{id}/history?from=N
//! GET  /v1/sessions/{id}/trace
//! POST /v1/chat                        {text, object?}
//! POST /v1/recognize                   {scene_ref}
//! GET  /v1/metrics
//! ```

mod actor;
pub mod api;
mod error;
mod http_vision;
mod journal;
mod server;

pub use error::ServiceError;
pub use http_vision::HttpRecognizer;
pub use journal::{Journal, Sequenced, DEFAULT_HISTORY_CAP};
pub use server::{router, serve, AppState, ServiceConfig};
