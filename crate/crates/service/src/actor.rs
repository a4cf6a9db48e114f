//! One thread per session; commands arrive through an inbox.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use docent_core::anchor::AnchorStore;
use docent_core::fsm::{InteractionState, TraceRecord, UserEvent};
use docent_core::orchestrator::{OutputEvent, RoomObservation, Services, Session, SessionError, SharedMetricsLog, TimedOutput};
use docent_core::vision::{EndpointConfig, RecognitionRequest, Recognized, VisionError, VisionService};
use tokio::sync::oneshot;
use tracing::{debug, warn};

use crate::api::Accepted;
use crate::error::ServiceError;
use crate::http_vision::HttpRecognizer;
use crate::journal::Journal;

pub(crate) type Reply<T> = oneshot::Sender<Result<T, ServiceError>>;

pub(crate) struct Status {
    pub state: InteractionState,
    pub clock: f64,
    pub active_room: Option<String>,
    pub loaded_anchors: usize,
    pub ended: bool,
}

pub(crate) enum Command {
    Event(UserEvent, Reply<Accepted>),
    Room(RoomObservation, Reply<Accepted>),
    Facing(Option<String>, Reply<Accepted>),
    Status(oneshot::Sender<Status>),
    Trace(oneshot::Sender<Vec<TraceRecord>>),
}

/// Recognizer used when the HTTP client could not be built.
struct Unavailable(VisionError, f64);

impl VisionService for Unavailable {
    fn recognize(&mut self, _: &RecognitionRequest) -> Result<Recognized, VisionError> {
        Err(self.0.clone())
    }

    fn expected_latency(&self) -> f64 {
        self.1
    }
}

pub(crate) struct Actor {
    pub session: Session,
    pub services: Services,
    /// Replaces the stub recognizer, built on the session thread.
    pub http_vision: Option<EndpointConfig>,
    pub store: Arc<AnchorStore>,
    pub journal: Arc<Journal>,
    pub metrics: SharedMetricsLog,
}

impl Actor {
    pub fn spawn(self) -> mpsc::Sender<Command> {
        let (tx, rx) = mpsc::channel();
        let name = format!("session-{}", self.session.id());
        thread::Builder::new().name(name).spawn(move || self.run(rx)).expect("spawn session thread");
        tx
    }

    fn run(mut self, inbox: mpsc::Receiver<Command>) {
        if let Some(config) = self.http_vision.take() {
            let expected = config.expected_latency;
            self.services.vision = match HttpRecognizer::new(config) {
                Ok(client) => Box::new(client),
                Err(error) => {
                    warn!(%error, "recognition client unavailable");
                    Box::new(Unavailable(error, expected))
                }
            };
        }
        // Ends when every sender is gone.
        while let Ok(command) = inbox.recv() {
            match command {
                Command::Event(event, reply) => {
                    let result = self.session.handle_event(&event, &mut self.services);
                    let _ = reply.send(self.settle(result));
                }
                Command::Room(observation, reply) => {
                    let result = self.session.initialize_room(&observation, &self.store, &mut self.services);
                    let _ = reply.send(self.settle(result));
                }
                Command::Facing(label, reply) => {
                    let result = if self.session.is_ended() {
                        Err(SessionError::Ended)
                    } else {
                        self.services.camera.facing = label;
                        Ok(Vec::new())
                    };
                    let _ = reply.send(self.settle(result));
                }
                Command::Status(reply) => {
                    let _ = reply.send(Status {
                        state: self.session.state().clone(),
                        clock: self.session.clock(),
                        active_room: self.session.active_room().map(str::to_owned),
                        loaded_anchors: self.session.loaded_anchors().len(),
                        ended: self.session.is_ended(),
                    });
                }
                Command::Trace(reply) => {
                    let _ = reply.send(self.session.trace().to_vec());
                }
            }
        }
        debug!(session = self.session.id(), "session thread exiting");
    }

    fn settle(&self, result: Result<Vec<TimedOutput>, SessionError>) -> Result<Accepted, ServiceError> {
        let id = self.session.id();
        let outputs = result.map_err(|e| match e {
            SessionError::Ended => ServiceError::SessionEnded(id.to_owned()),
            SessionError::MalformedEvent(reason) => ServiceError::MalformedEvent(reason),
            other => ServiceError::Unavailable(other.to_string()),
        })?;
        for output in &outputs {
            if let OutputEvent::MetricsUpdated { metrics } = &output.event {
                self.metrics.append(id, *metrics);
            }
        }
        let last_seq = self.journal.publish(outputs);
        Ok(Accepted { last_seq, state: self.session.state().clone() })
    }
}
