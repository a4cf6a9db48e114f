use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use super::config::EngineConfig;
use super::metrics::{QueryKind, QueryMetrics, QueryRecord};
use super::services::Services;
use crate::anchor::{hit_test, Anchor, AnchorStore, RoomResolution};
use crate::composer::{assemble, ComposeError, PerformanceAssets, PerformanceTimeline};
use crate::dialogue::{DialogueContext, Query, Reply};
use crate::fsm::{self, AgentSignal, EventError, FsmAction, FsmInput, GazeTarget, InteractionState, TraceRecord, UserEvent};
use crate::vision::{RecognitionRequest, VisionError};

const APOLOGY_TIMEOUT: &str = "Sorry, I couldn't get a good look at that in time.";
const APOLOGY_ENDPOINT: &str = "Sorry, my eyes aren't working right now. Please ask me again in a moment.";
const APOLOGY_MALFORMED: &str = "Sorry, I couldn't make sense of what I saw.";
const APOLOGY_CHATBOT: &str = "Sorry, I lost my train of thought. Could you ask me again?";
const NOT_RECOGNISED: &str = "Hmm, I'm not sure what that is. Could you look at it again?";
const ROOM_AMBIGUOUS: &str = "I'm not sure which room we are in. Could you show me another flower?";
const ROOM_UNKNOWN: &str = "I don't recognise this room yet.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputEvent {
    StateChanged { state: InteractionState, actions: Vec<FsmAction> },
    AgentPerformance { timeline: PerformanceTimeline, is_filler: bool },
    MetricsUpdated { metrics: QueryMetrics },
    RoomResolved { room_id: String, anchors: Vec<Anchor> },
    SessionEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOutput {
    pub at: f64,
    pub event: OutputEvent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("session has ended")]
    Ended,
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("composition failed: {0}")]
    Compose(#[from] ComposeError),
}

impl From<EventError> for SessionError {
    fn from(e: EventError) -> Self {
        SessionError::MalformedEvent(e.to_string())
    }
}

/// How the room is identified when loading anchors.
#[derive(Debug, Clone, PartialEq)]
pub enum RoomObservation {
    /// Labels already known, no recognition needed.
    Labels(BTreeSet<String>),
    /// Recognise this view first.
    View(RecognitionRequest),
}

/// Result of resolving what the user is looking at.
#[derive(Debug, Clone, PartialEq)]
enum Capture {
    Anchor { label: String },
    Recognized { label: String, or_time: f64 },
    Miss { or_time: f64 },
    Failed { error: VisionError },
}

impl Capture {
    fn or_time(&self) -> Option<f64> {
        match self {
            Capture::Anchor { .. } => None,
            Capture::Recognized { or_time, .. } | Capture::Miss { or_time } => Some(*or_time),
            Capture::Failed { error } => Some(error.elapsed()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Completion {
    Reply { timeline: PerformanceTimeline },
    RoomLoaded { room_id: String, anchors: Vec<Anchor> },
    Clarification { timeline: PerformanceTimeline },
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    due: f64,
    seq: u64,
    started_at: f64,
    filler_at: Option<f64>,
    metrics: QueryMetrics,
    completion: Completion,
}

/// One user's conversation with the agent.
pub struct Session {
    id: String,
    config: Arc<EngineConfig>,
    assets: Arc<PerformanceAssets>,
    state: InteractionState,
    dialogue: DialogueContext,
    active_room: Option<String>,
    anchors: Vec<Anchor>,
    clock: f64,
    gaze: GazeTarget,
    capture: Option<Capture>,
    pending: Vec<Pending>,
    next_seq: u64,
    fillers_played: usize,
    open_filler: Option<f64>,
    records: Vec<QueryRecord>,
    trace: Vec<TraceRecord>,
    ended: bool,
}

impl Session {
    /// Creates a session in `Idle`; the returned output announces it.
    pub fn new(id: impl Into<String>, config: Arc<EngineConfig>, assets: Arc<PerformanceAssets>) -> (Self, Vec<TimedOutput>) {
        let session = Self {
            id: id.into(),
            config,
            assets,
            state: InteractionState::Idle,
            dialogue: DialogueContext::default(),
            active_room: None,
            anchors: Vec::new(),
            clock: 0.0,
            gaze: GazeTarget::None,
            capture: None,
            pending: Vec::new(),
            next_seq: 0,
            fillers_played: 0,
            open_filler: None,
            records: Vec::new(),
            trace: Vec::new(),
            ended: false,
        };
        let hello = TimedOutput {
            at: 0.0,
            event: OutputEvent::StateChanged { state: InteractionState::Idle, actions: vec![] },
        };
        (session, vec![hello])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> &InteractionState {
        &self.state
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn active_room(&self) -> Option<&str> {
        self.active_room.as_deref()
    }

    pub fn loaded_anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn dialogue(&self) -> &DialogueContext {
        &self.dialogue
    }

    pub fn metrics(&self) -> Vec<QueryMetrics> {
        self.records.iter().map(|r| r.metrics).collect()
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    /// True while a reply or room load is still in flight.
    pub fn is_busy(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn next_due(&self) -> Option<f64> {
        self.pending.first().map(|p| p.due)
    }

    /// Earliest time a tick could change anything in this session.
    pub fn next_wakeup(&self) -> Option<f64> {
        let deadline = fsm::next_deadline(&self.state, &self.config.fsm);
        match (self.next_due(), deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Feeds one user event. Ticks must strictly advance the clock.
    pub fn handle_event(&mut self, event: &UserEvent, services: &mut Services) -> Result<Vec<TimedOutput>, SessionError> {
        if self.ended {
            return Err(SessionError::Ended);
        }
        event.validate()?;
        let mut out = Vec::new();

        if let UserEvent::Tick { now } = event {
            if *now <= self.clock {
                return Err(SessionError::MalformedEvent(format!(
                    "tick at {now} does not advance the clock ({})",
                    self.clock
                )));
            }
            self.release_until(*now, &mut out);
            self.clock = *now;
        }

        match event {
            UserEvent::GazeOn { target } => self.gaze = target.clone(),
            UserEvent::GazeOff => self.gaze = GazeTarget::None,
            _ => {}
        }

        let actions = self.drive(FsmInput::User(event.clone()), self.clock, &mut out);
        for action in &actions {
            self.handle_action(action, services, &mut out)?;
        }
        // Work that took no simulated time completes immediately.
        self.release_until(self.clock, &mut out);

        if self.state.is_ended() {
            self.ended = true;
            self.pending.clear();
            out.push(TimedOutput { at: self.clock, event: OutputEvent::SessionEnded });
        }
        Ok(out)
    }

    /// Advances the clock to `t` with a tick, if `t` is in the future.
    pub fn advance_to(&mut self, t: f64, services: &mut Services) -> Result<Vec<TimedOutput>, SessionError> {
        if t > self.clock {
            self.handle_event(&UserEvent::Tick { now: t }, services)
        } else {
            Ok(Vec::new())
        }
    }

    /// Applies an input to the machine, recording the trace and announcing
    /// any change.
    fn drive(&mut self, input: FsmInput, at: f64, out: &mut Vec<TimedOutput>) -> Vec<FsmAction> {
        let transition = fsm::apply(&self.state, &input, at, &self.config.fsm);
        let changed = transition.state != self.state;
        self.trace.push(TraceRecord {
            session: self.id.clone(),
            t: at,
            input,
            state: transition.state.clone(),
            actions: transition.actions.clone(),
        });
        if changed || !transition.actions.is_empty() {
            out.push(TimedOutput {
                at,
                event: OutputEvent::StateChanged { state: transition.state.clone(), actions: transition.actions.clone() },
            });
        }
        self.state = transition.state;
        transition.actions
    }

    fn release_until(&mut self, now: f64, out: &mut Vec<TimedOutput>) {
        while self.pending.first().is_some_and(|p| p.due <= now) {
            let p = self.pending.remove(0);
            self.clock = self.clock.max(p.due);
            self.records.push(QueryRecord {
                session: self.id.clone(),
                started_at: p.started_at,
                filler_at: p.filler_at,
                reply_at: p.due,
                metrics: p.metrics,
            });
            match p.completion {
                Completion::Reply { timeline } | Completion::Clarification { timeline } => {
                    let until = p.due + timeline.total_duration;
                    out.push(TimedOutput { at: p.due, event: OutputEvent::AgentPerformance { timeline, is_filler: false } });
                    self.drive(FsmInput::Agent(AgentSignal::ReplyStarted { until }), p.due, out);
                }
                Completion::RoomLoaded { room_id, anchors } => {
                    debug!(session = %self.id, room = %room_id, anchors = anchors.len(), "room loaded");
                    self.active_room = Some(room_id.clone());
                    self.anchors = anchors.clone();
                    out.push(TimedOutput { at: p.due, event: OutputEvent::RoomResolved { room_id, anchors } });
                }
            }
            out.push(TimedOutput { at: p.due, event: OutputEvent::MetricsUpdated { metrics: p.metrics } });
        }
    }

    fn schedule(&mut self, started_at: f64, metrics: QueryMetrics, completion: Completion) {
        let pending = Pending {
            due: started_at + metrics.total_time,
            seq: self.next_seq,
            started_at,
            filler_at: self.open_filler.take(),
            metrics,
            completion,
        };
        self.next_seq += 1;
        let at = self.pending.partition_point(|p| (p.due, p.seq) <= (pending.due, pending.seq));
        self.pending.insert(at, pending);
    }

    fn perform(&self, reply: &Reply) -> Result<PerformanceTimeline, SessionError> {
        Ok(assemble(reply, &self.assets)?)
    }

    /// Plays the thinking filler if the recognition call is expected to be
    /// slow enough to notice.
    fn maybe_filler(&mut self, services: &Services, out: &mut Vec<TimedOutput>) -> Result<(), SessionError> {
        if services.vision.expected_latency() <= self.config.filler_threshold {
            return Ok(());
        }
        let texts: Vec<&String> = self.config.filler_texts.iter().filter(|t| !t.trim().is_empty()).collect();
        let text = texts[self.fillers_played % texts.len()].clone();
        self.fillers_played += 1;
        let timeline = self.perform(&Reply::neutral(text))?;
        out.push(TimedOutput { at: self.clock, event: OutputEvent::AgentPerformance { timeline, is_filler: true } });
        self.open_filler = Some(self.clock);
        self.drive(FsmInput::Agent(AgentSignal::FillerStarted), self.clock, out);
        Ok(())
    }

    fn recognize(
        &mut self,
        request: &RecognitionRequest,
        services: &mut Services,
        out: &mut Vec<TimedOutput>,
    ) -> Result<Capture, SessionError> {
        self.maybe_filler(services, out)?;
        Ok(match services.vision.recognize(request) {
            Ok(r) if r.result.is_miss() => Capture::Miss { or_time: r.elapsed },
            Ok(r) => Capture::Recognized { label: r.result.label, or_time: r.elapsed },
            Err(error) => Capture::Failed { error },
        })
    }

    /// Routes one machine action to the services.
    pub fn handle_action(
        &mut self,
        action: &FsmAction,
        services: &mut Services,
        out: &mut Vec<TimedOutput>,
    ) -> Result<(), SessionError> {
        match action {
            FsmAction::StartRecognizer | FsmAction::StopRecognizer | FsmAction::EndConversation => {}
            FsmAction::EmitGreeting { text } => {
                let timeline = self.perform(&Reply::neutral(text.clone()))?;
                out.push(TimedOutput { at: self.clock, event: OutputEvent::AgentPerformance { timeline, is_filler: false } });
            }
            FsmAction::CaptureGazeTarget => {
                let hit = match &self.gaze {
                    GazeTarget::WorldRay { origin, direction } => {
                        hit_test(&self.anchors, *origin, *direction).ok().flatten().map(|a| a.label.clone())
                    }
                    _ => None,
                };
                let capture = match hit {
                    Some(label) => Capture::Anchor { label },
                    None => {
                        let request = services.camera.capture(&self.gaze);
                        self.recognize(&request, services, out)?
                    }
                };
                debug!(session = %self.id, ?capture, "gaze target captured");
                self.capture = Some(capture);
            }
            FsmAction::SubmitQuery { text, needs_object } => self.submit(text, *needs_object, services)?,
        }
        Ok(())
    }

    fn submit(&mut self, text: &str, needs_object: bool, services: &mut Services) -> Result<(), SessionError> {
        let started_at = self.clock;
        let kind = if needs_object { QueryKind::ObjectQuery } else { QueryKind::General };
        let capture = if needs_object { self.capture.take() } else { None };
        let or_time = capture.as_ref().and_then(Capture::or_time);

        let object = match &capture {
            Some(Capture::Anchor { label }) | Some(Capture::Recognized { label, .. }) => Some(label.clone()),
            _ => None,
        };
        let early = match &capture {
            Some(Capture::Failed { error }) => Some(vision_apology(error)),
            Some(Capture::Miss { .. }) => Some(NOT_RECOGNISED),
            _ => None,
        };

        let (reply, chatbot_time) = match early {
            Some(text) => (Reply::neutral(text), None),
            None => {
                let query = Query { text: text.to_owned(), object };
                match services.chatbot.respond(&query, &self.dialogue) {
                    Ok(outcome) => {
                        self.dialogue = outcome.context;
                        (outcome.reply, Some(outcome.elapsed))
                    }
                    Err(e) => (Reply::neutral(APOLOGY_CHATBOT), Some(e.elapsed())),
                }
            }
        };

        let metrics = QueryMetrics::new(kind, or_time, chatbot_time, services.processing.for_kind(kind));
        let timeline = self.perform(&reply)?;
        self.schedule(started_at, metrics, Completion::Reply { timeline });
        Ok(())
    }

    /// Identifies the room and loads its anchors.
    ///
    /// When recognition is used the query is timed as an anchor load. An
    /// ambiguous or unknown room leaves the session roomless and the agent
    /// asks for help instead.
    pub fn initialize_room(
        &mut self,
        observation: &RoomObservation,
        store: &AnchorStore,
        services: &mut Services,
    ) -> Result<Vec<TimedOutput>, SessionError> {
        if self.ended {
            return Err(SessionError::Ended);
        }
        let mut out = Vec::new();
        let started_at = self.clock;
        let (labels, or_time, failure) = match observation {
            RoomObservation::Labels(labels) => (labels.clone(), None, None),
            RoomObservation::View(request) => match self.recognize(request, services, &mut out)? {
                Capture::Recognized { label, or_time } => ([label].into_iter().collect(), Some(or_time), None),
                Capture::Miss { or_time } => (BTreeSet::new(), Some(or_time), Some(NOT_RECOGNISED)),
                Capture::Failed { error } => (BTreeSet::new(), Some(error.elapsed()), Some(vision_apology(&error))),
                Capture::Anchor { .. } => unreachable!("recognition never yields an anchor hit"),
            },
        };

        let metrics = QueryMetrics::new(QueryKind::AnchorLoad, or_time, None, services.processing.anchor_load);
        let resolution = match failure {
            Some(text) => Err(text),
            None if labels.is_empty() => Err(NOT_RECOGNISED),
            None => match store.resolve_room(&labels) {
                Ok(RoomResolution::Room { room_id }) => Ok(room_id),
                Ok(RoomResolution::Ambiguous { .. }) => Err(ROOM_AMBIGUOUS),
                Ok(RoomResolution::Unknown) | Err(_) => Err(ROOM_UNKNOWN),
            },
        };
        let completion = match resolution.and_then(|room_id| match store.load_room(&room_id) {
            Ok(anchors) => Ok(Completion::RoomLoaded { room_id, anchors }),
            Err(_) => Err(ROOM_UNKNOWN),
        }) {
            Ok(c) => c,
            Err(text) => Completion::Clarification { timeline: self.perform(&Reply::neutral(text))? },
        };
        self.schedule(started_at, metrics, completion);
        self.release_until(self.clock, &mut out);
        Ok(out)
    }
}

fn vision_apology(error: &VisionError) -> &'static str {
    match error {
        VisionError::Timeout { .. } => APOLOGY_TIMEOUT,
        VisionError::EndpointError { .. } | VisionError::Config(_) => APOLOGY_ENDPOINT,
        VisionError::MalformedResponse(_) => APOLOGY_MALFORMED,
    }
}
