//! Discrete-event simulation of guided visits.
//!
//! Every session follows a script of high-level steps. Sessions share one
//! stub recognition endpoint and one chatbot, each with its own seeded
//! latency stream, and are interleaved on a single simulated clock. Nothing
//! sleeps: the driver jumps straight to the next moment anything can happen.
//!
//! Step timing: `after` is the pause between the previous step settling and
//! this one starting. A step settles once the agent has nothing in flight
//! and is not mid-dwell or mid-reply. Spoken questions reach the machine as
//! one final transcript after the end-of-utterance window; that silence is
//! not part of any response time.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor::{AnchorError, AnchorStore, Pose};
use crate::composer::PerformanceAssets;
use crate::dialogue::{KnowledgeBase, SentimentLexicon};
use crate::fsm::{GazeTarget, InteractionState, TraceRecord, UserEvent};
use crate::geometry::Vec3;
use crate::latency::{stream_seed, LatencyModel, LatencySampler, ProcessingModel};
use crate::orchestrator::{
    aggregate_metrics, EngineConfig, KindSummary, LocalChatbot, QueryKind, QueryRecord, RoomObservation, SceneCamera,
    SceneObject, Services, Session, TimedOutput,
};
use crate::vision::{RecognitionRequest, RecognitionResult, StubEndpoint, StubRecognizer};

/// Confidence given to scenario objects that have no recognition fixture.
pub const SYNTHETIC_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_QUESTION: &str = "what is this";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub label: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub room_id: String,
    pub objects: Vec<ObjectSpec>,
}

impl RoomSpec {
    pub fn object(&self, label: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.label == label)
    }

    pub fn camera(&self) -> SceneCamera {
        let objects = self
            .objects
            .iter()
            .map(|o| SceneObject { label: o.label.clone(), position: o.pose.position })
            .collect();
        SceneCamera::new(self.room_id.clone(), objects)
    }
}

/// One scripted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ScriptStep {
    /// Recognise one object in view and load the room's anchors. Defaults to
    /// the room's first object.
    EnterRoom { view: Option<String> },
    /// Look at the guide until it starts listening.
    LookAtCharacter,
    /// Say something that needs no recognition.
    AskGeneral { text: String },
    /// Ask about an object. With `gaze` the user looks along a ray at it;
    /// without, only the camera's heading points at it.
    AskAboutObject {
        label: String,
        text: Option<String>,
        #[serde(default = "yes")]
        gaze: bool,
    },
    /// A raw event. Ticks are not allowed; time comes from `after`.
    Event { event: UserEvent },
    /// Look away and wait for the conversation to close.
    Leave,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedStep {
    #[serde(default)]
    pub after: f64,
    #[serde(flatten)]
    pub step: ScriptStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEventScript {
    pub room: String,
    pub steps: Vec<TimedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub rooms: Vec<RoomSpec>,
    /// room id → guide name.
    #[serde(default)]
    pub characters: BTreeMap<String, String>,
    /// Eye position used for gaze rays.
    #[serde(default = "default_viewer")]
    pub viewer: Vec3,
    /// Pre-place one anchor per object.
    #[serde(default)]
    pub anchored: bool,
    /// One script per session.
    pub scripts: Vec<UserEventScript>,
}

fn default_viewer() -> Vec3 {
    crate::fixtures::VIEWER
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}: {reason}", location(*script, *step))]
pub struct ScriptError {
    pub script: Option<usize>,
    pub step: Option<usize>,
    pub reason: String,
}

fn location(script: Option<usize>, step: Option<usize>) -> String {
    match (script, step) {
        (Some(script), Some(step)) => format!("script {script} step {step}"),
        (Some(script), None) => format!("script {script}"),
        _ => "scenario".to_owned(),
    }
}

impl ScriptError {
    fn scenario(reason: impl Into<String>) -> Self {
        Self { script: None, step: None, reason: reason.into() }
    }

    fn at(script: usize, step: Option<usize>, reason: impl Into<String>) -> Self {
        Self { script: Some(script), step, reason: reason.into() }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScriptError::scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn room(&self, room_id: &str) -> Option<&RoomSpec> {
        self.rooms.iter().find(|r| r.room_id == room_id)
    }

    /// Structural checks plus every label and room a script refers to.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut rooms = BTreeSet::new();
        for room in &self.rooms {
            if !rooms.insert(room.room_id.as_str()) {
                return Err(ScriptError::scenario(format!("room {:?} defined twice", room.room_id)));
            }
            let mut labels = BTreeSet::new();
            for object in &room.objects {
                if !labels.insert(object.label.as_str()) {
                    return Err(ScriptError::scenario(format!(
                        "label {:?} appears twice in room {:?}",
                        object.label, room.room_id
                    )));
                }
                if !object.pose.is_valid() {
                    return Err(ScriptError::scenario(format!("object {:?} has an invalid pose", object.label)));
                }
            }
        }
        for room_id in self.characters.keys() {
            if !rooms.contains(room_id.as_str()) {
                return Err(ScriptError::scenario(format!("character placed in unknown room {room_id:?}")));
            }
        }
        for (i, script) in self.scripts.iter().enumerate() {
            let room = self
                .room(&script.room)
                .ok_or_else(|| ScriptError::at(i, None, format!("unknown room {:?}", script.room)))?;
            for (j, step) in script.steps.iter().enumerate() {
                if !(step.after >= 0.0 && step.after.is_finite()) {
                    return Err(ScriptError::at(i, Some(j), format!("pause {} must be finite and >= 0", step.after)));
                }
                let label = match &step.step {
                    ScriptStep::EnterRoom { view: Some(label) } | ScriptStep::AskAboutObject { label, .. } => Some(label),
                    _ => None,
                };
                if let Some(label) = label {
                    if room.object(label).is_none() {
                        return Err(ScriptError::at(
                            i,
                            Some(j),
                            format!("unknown label {label:?} in room {:?}", room.room_id),
                        ));
                    }
                }
                match &step.step {
                    ScriptStep::EnterRoom { view: None } if room.objects.is_empty() => {
                        return Err(ScriptError::at(i, Some(j), format!("room {:?} has no objects", room.room_id)));
                    }
                    ScriptStep::Event { event: UserEvent::Tick { .. } } => {
                        return Err(ScriptError::at(i, Some(j), "raw ticks are not allowed; use `after`"));
                    }
                    ScriptStep::Event { event } => {
                        event.validate().map_err(|e| ScriptError::at(i, Some(j), e.to_string()))?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Same scripts, but every object already has an anchor.
pub fn anchored_variant(scenario: &Scenario) -> Scenario {
    Scenario { anchored: true, ..scenario.clone() }
}

/// Recognition fixtures covering every object in the scenario: bundled
/// answers where they exist, a synthetic confident answer otherwise.
pub fn scene_fixtures(scenario: &Scenario) -> BTreeMap<String, RecognitionResult> {
    let bundled = crate::fixtures::vision_fixtures();
    let mut fixtures = bundled.clone();
    for room in &scenario.rooms {
        for object in &room.objects {
            let key = format!("{}/{}_view", room.room_id, object.label);
            fixtures.entry(key).or_insert_with(|| RecognitionResult {
                label: object.label.clone(),
                confidence: SYNTHETIC_CONFIDENCE,
            });
        }
    }
    fixtures
}

/// Registers every room's signature and, for anchored scenarios, places an
/// anchor on every object from its recognition fixture.
pub fn build_store(
    scenario: &Scenario,
    fixtures: &BTreeMap<String, RecognitionResult>,
    radius: f64,
    threshold: f64,
) -> Result<AnchorStore, AnchorError> {
    let mut store = AnchorStore::new();
    for room in &scenario.rooms {
        store.register_room(&room.room_id, room.objects.iter().map(|o| o.label.as_str()))?;
        if !scenario.anchored {
            continue;
        }
        for object in &room.objects {
            let key = format!("{}/{}_view", room.room_id, object.label);
            let recognition = fixtures.get(&key).cloned().unwrap_or_else(RecognitionResult::miss);
            store.place_anchor(&room.room_id, &recognition, object.pose, radius, threshold, 0.0)?;
        }
    }
    Ok(store)
}

/// Shared stub services: one recognition endpoint, one chatbot.
#[derive(Debug, Clone)]
pub struct StubBackend {
    pub vision: StubRecognizer,
    pub chatbot: LocalChatbot,
    pub processing: ProcessingModel,
}

impl StubBackend {
    pub fn new(
        fixtures: BTreeMap<String, RecognitionResult>,
        kb: Arc<KnowledgeBase>,
        lexicon: Arc<SentimentLexicon>,
        latency: &LatencyModel,
        timeout: f64,
        seed: u64,
    ) -> Self {
        let endpoint = StubEndpoint::new(fixtures, latency.vision, stream_seed(seed, "vision"));
        let chat_latency = LatencySampler::new(latency.chatbot, stream_seed(seed, "chatbot"));
        Self {
            vision: StubRecognizer::new(endpoint, timeout),
            chatbot: LocalChatbot::new(kb, lexicon, chat_latency),
            processing: latency.processing,
        }
    }

    pub fn services(&self, room: &RoomSpec) -> Services {
        Services {
            vision: Box::new(self.vision.clone()),
            chatbot: Box::new(self.chatbot.clone()),
            camera: room.camera(),
            processing: self.processing,
        }
    }
}

/// Everything a driver does to a session, in order. Replaying these against
/// a fresh session with the same seed reproduces it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverInput {
    Event { event: UserEvent },
    Room { scene_ref: String },
    Facing { label: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub id: String,
    pub room: String,
    pub inputs: Vec<DriverInput>,
    pub trace: Vec<TraceRecord>,
    pub outputs: Vec<TimedOutput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub seed: u64,
    pub anchored: bool,
    pub sessions: usize,
    /// Calls made to the recognition endpoint.
    pub vision_calls: usize,
    pub summaries: Vec<KindSummary>,
    pub records: Vec<QueryRecord>,
}

impl SimReport {
    pub fn summary(&self, kind: QueryKind) -> &KindSummary {
        self.summaries.iter().find(|s| s.kind == kind).expect("every kind is summarised")
    }

    /// Summaries recomputed from the raw records.
    pub fn recompute(&self) -> Vec<KindSummary> {
        let log: Vec<_> = self.records.iter().map(|r| r.metrics).collect();
        QueryKind::ALL.iter().map(|k| aggregate_metrics(&log, *k)).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub report: SimReport,
    pub sessions: Vec<SessionLog>,
}

pub fn run(
    scenario: &Scenario,
    latency: &LatencyModel,
    config: &EngineConfig,
    seed: u64,
) -> Result<SimReport, ScriptError> {
    run_detailed(scenario, latency, config, seed).map(|r| r.report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Waiting to begin the next step at this time.
    Start(f64),
    /// User is talking; the recogniser reports the final text once the
    /// end-of-utterance window has passed.
    Utterance(f64),
    /// Step issued, waiting for it to settle.
    Settle,
    Done,
}

struct Runner<'a> {
    index: usize,
    script: &'a UserEventScript,
    room: &'a RoomSpec,
    viewer: Vec3,
    /// End-of-utterance silence the recogniser waits for.
    window: f64,
    session: Session,
    services: Services,
    step: usize,
    phase: Phase,
    inputs: Vec<DriverInput>,
    outputs: Vec<TimedOutput>,
}

impl Runner<'_> {
    fn error(&self, reason: impl Into<String>) -> ScriptError {
        ScriptError::at(self.index, Some(self.step), reason)
    }

    fn feed(&mut self, event: UserEvent) -> Result<(), ScriptError> {
        let out = self.session.handle_event(&event, &mut self.services).map_err(|e| self.error(e.to_string()))?;
        self.inputs.push(DriverInput::Event { event });
        self.outputs.extend(out);
        Ok(())
    }

    fn face(&mut self, label: Option<String>) {
        self.services.camera.facing = label.clone();
        self.inputs.push(DriverInput::Facing { label });
    }

    fn begin(&mut self, store: &AnchorStore) -> Result<(), ScriptError> {
        match &self.script.steps[self.step].step {
            ScriptStep::EnterRoom { view } => {
                let label = view.clone().unwrap_or_else(|| self.room.objects[0].label.clone());
                let scene_ref = self.services.camera.view_ref(&label);
                let observation = RoomObservation::View(RecognitionRequest { scene_ref: scene_ref.clone() });
                let out = self
                    .session
                    .initialize_room(&observation, store, &mut self.services)
                    .map_err(|e| self.error(e.to_string()))?;
                self.inputs.push(DriverInput::Room { scene_ref });
                self.outputs.extend(out);
            }
            ScriptStep::LookAtCharacter => self.feed(UserEvent::GazeOn { target: GazeTarget::Character })?,
            ScriptStep::AskGeneral { .. } => self.feed(UserEvent::SpeechStarted)?,
            ScriptStep::AskAboutObject { label, text, gaze } => {
                let text = text.clone().unwrap_or_else(|| DEFAULT_QUESTION.to_owned());
                let object = self.room.object(label).ok_or_else(|| self.error(format!("unknown label {label:?}")))?;
                if *gaze {
                    let direction = (object.pose.position - self.viewer)
                        .normalized()
                        .ok_or_else(|| self.error("object sits at the viewer's eye"))?;
                    let target = GazeTarget::WorldRay { origin: self.viewer, direction };
                    self.feed(UserEvent::GazeOn { target })?;
                } else {
                    self.face(Some(label.clone()));
                }
                self.feed(UserEvent::VoiceCommand { text })?;
            }
            ScriptStep::Event { event } => self.feed(event.clone())?,
            ScriptStep::Leave => self.feed(UserEvent::GazeOff)?,
        }
        Ok(())
    }

    fn settled(&self) -> bool {
        let busy = self.session.is_busy();
        match self.script.steps[self.step].step {
            ScriptStep::Leave => self.session.is_ended() || (!busy && *self.session.state() == InteractionState::Idle),
            _ => {
                self.session.is_ended()
                    || (!busy
                        && !matches!(
                            self.session.state(),
                            InteractionState::Dwelling { .. }
                                | InteractionState::AwaitingReply { .. }
                                | InteractionState::AgentSpeaking { .. }
                        ))
            }
        }
    }

    fn finish(&mut self) -> Result<(), ScriptError> {
        if let ScriptStep::AskAboutObject { gaze, .. } = self.script.steps[self.step].step {
            if self.session.is_ended() {
                return Ok(());
            }
            if gaze {
                self.feed(UserEvent::GazeOn { target: GazeTarget::Character })?;
            } else {
                self.face(None);
            }
        }
        Ok(())
    }

    /// Does everything due at `now` and returns when to wake next.
    fn wake(&mut self, now: f64, store: &AnchorStore) -> Result<Option<f64>, ScriptError> {
        if now > self.session.clock() && !self.session.is_ended() {
            self.feed(UserEvent::Tick { now })?;
        }
        loop {
            match self.phase {
                Phase::Done => return Ok(None),
                Phase::Start(at) if at > self.session.clock() => return Ok(Some(at)),
                Phase::Start(_) => {
                    if self.session.is_ended() {
                        return Err(self.error("session ended before the script finished"));
                    }
                    self.begin(store)?;
                    self.phase = match self.script.steps[self.step].step {
                        ScriptStep::AskGeneral { .. } => Phase::Utterance(self.session.clock() + self.window),
                        _ => Phase::Settle,
                    };
                }
                Phase::Utterance(at) if at > self.session.clock() => return Ok(Some(at)),
                Phase::Utterance(_) => {
                    if let ScriptStep::AskGeneral { text } = &self.script.steps[self.step].step {
                        self.feed(UserEvent::SpeechFinal { text: text.clone() })?;
                    }
                    self.phase = Phase::Settle;
                }
                Phase::Settle if self.settled() => {
                    self.finish()?;
                    self.step += 1;
                    self.phase = match self.script.steps.get(self.step) {
                        Some(next) => Phase::Start(self.session.clock() + next.after),
                        None => Phase::Done,
                    };
                }
                Phase::Settle => {
                    return match self.session.next_wakeup() {
                        Some(t) if t > self.session.clock() => Ok(Some(t)),
                        _ => Err(self.error(format!("session stalled in {}", self.session.state().name()))),
                    };
                }
            }
        }
    }
}

/// Heap key: earliest time first, then lowest session index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Wake {
    at: f64,
    index: usize,
}

impl Eq for Wake {}

impl Ord for Wake {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at.total_cmp(&other.at).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Wake {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Runs the scenario and keeps every session's inputs, trace and outputs.
pub fn run_detailed(
    scenario: &Scenario,
    latency: &LatencyModel,
    config: &EngineConfig,
    seed: u64,
) -> Result<SimRun, ScriptError> {
    scenario.validate()?;
    latency.validate().map_err(|e| ScriptError::scenario(e.to_string()))?;
    config.validate().map_err(|e| ScriptError::scenario(e.to_string()))?;
    config.check_processing(&latency.processing).map_err(|e| ScriptError::scenario(e.to_string()))?;

    let fixtures = scene_fixtures(scenario);
    let store = build_store(scenario, &fixtures, config.anchor_radius, config.placement_threshold)
        .map_err(|e| ScriptError::scenario(e.to_string()))?;
    let backend = StubBackend::new(
        fixtures,
        Arc::new(crate::fixtures::knowledge_base()),
        Arc::new(crate::fixtures::sentiment_lexicon()),
        latency,
        config.vision.timeout,
        seed,
    );
    let config = Arc::new(config.clone());
    let assets: Arc<PerformanceAssets> = Arc::new(crate::fixtures::performance_assets());

    let mut runners = Vec::with_capacity(scenario.scripts.len());
    for (index, script) in scenario.scripts.iter().enumerate() {
        let room = scenario.room(&script.room).expect("validated");
        let (session, hello) = Session::new(format!("s{index:02}"), config.clone(), assets.clone());
        let phase = match script.steps.first() {
            Some(step) => Phase::Start(step.after),
            None => Phase::Done,
        };
        runners.push(Runner {
            index,
            script,
            room,
            viewer: scenario.viewer,
            window: config.fsm.end_of_utterance_window,
            session,
            services: backend.services(room),
            step: 0,
            phase,
            inputs: Vec::new(),
            outputs: hello,
        });
    }

    let mut queue: BinaryHeap<Reverse<Wake>> =
        (0..runners.len()).map(|index| Reverse(Wake { at: 0.0, index })).collect();
    while let Some(Reverse(Wake { at, index })) = queue.pop() {
        if let Some(next) = runners[index].wake(at, &store)? {
            queue.push(Reverse(Wake { at: next, index }));
        }
    }

    let mut records: Vec<QueryRecord> = runners.iter().flat_map(|r| r.session.records().iter().cloned()).collect();
    records.sort_by(|a, b| a.reply_at.total_cmp(&b.reply_at).then_with(|| a.session.cmp(&b.session)));
    let log: Vec<_> = records.iter().map(|r| r.metrics).collect();
    let report = SimReport {
        scenario: scenario.name.clone(),
        seed,
        anchored: scenario.anchored,
        sessions: runners.len(),
        vision_calls: backend.vision.call_count(),
        summaries: QueryKind::ALL.iter().map(|k| aggregate_metrics(&log, *k)).collect(),
        records,
    };
    let sessions = runners
        .into_iter()
        .map(|r| SessionLog {
            id: r.session.id().to_owned(),
            room: r.room.room_id.clone(),
            inputs: r.inputs,
            trace: r.session.trace().to_vec(),
            outputs: r.outputs,
        })
        .collect();
    Ok(SimRun { report, sessions })
}

fn seconds(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.1}s"))
}

/// Renders the report as the familiar per-query table.
pub fn render_table(report: &SimReport) -> String {
    let cols: Vec<&KindSummary> = QueryKind::ALL.iter().map(|k| report.summary(*k)).collect();
    let rows: [(&str, Vec<String>); 7] = [
        ("Query", cols.iter().map(|c| c.kind.column().to_owned()).collect()),
        ("Total queries", cols.iter().map(|c| c.count.to_string()).collect()),
        ("Object recognition", cols.iter().map(|c| seconds(c.mean_or)).collect()),
        ("Chatbot", cols.iter().map(|c| seconds(c.mean_chatbot)).collect()),
        ("Processing time", cols.iter().map(|c| seconds(c.mean_processing)).collect()),
        ("Total Time", cols.iter().map(|c| seconds(c.mean_total)).collect()),
        ("Std Dev", cols.iter().map(|c| c.stddev_total.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.2}"))).collect()),
    ];
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cell_width = rows.iter().flat_map(|(_, cells)| cells.iter().map(String::len)).max().unwrap_or(0);
    let mut out = String::new();
    for (label, cells) in &rows {
        let _ = write!(out, "{label:<label_width$}");
        for cell in cells {
            let _ = write!(out, "  {cell:>cell_width$}");
        }
        out.push('\n');
    }
    out
}
