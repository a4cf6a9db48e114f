//! Gaze-and-speech interaction state machine.
//!
//! The machine is a pure transition function: [`step`] consumes a user event
//! observed at a simulated time and returns the next state plus the actions
//! the session should carry out. The enclosing session owns the clock; only
//! [`UserEvent::Tick`] moves time forward.
//!
//! Conversation flow:
//!
//! ```text
//! Idle --gaze on character--> Dwelling --dwell >= threshold--> Listening
//! Listening --speech final--> AwaitingReply --reply--> AgentSpeaking --done--> Listening
//! Listening --gaze away + silence >= timeout--> Ended
//! ```
//!
//! A trigger voice command ("what is this") short-circuits the flow from any
//! live state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GazeTarget {
    Character,
    WorldRay { origin: Vec3, direction: Vec3 },
    None,
}

impl GazeTarget {
    pub fn is_character(&self) -> bool {
        matches!(self, GazeTarget::Character)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserEvent {
    GazeOn { target: GazeTarget },
    GazeOff,
    SpeechStarted,
    SpeechFinal { text: String },
    Tick { now: f64 },
    VoiceCommand { text: String },
    AgentSpeechDone,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("speech text is empty")]
    EmptySpeech,
    #[error("gaze direction is not unit length")]
    NonUnitDirection,
    #[error("tick time must be finite and non-negative")]
    BadTick,
}

impl UserEvent {
    /// Checks the per-event invariants that do not depend on trace history.
    pub fn validate(&self) -> Result<(), EventError> {
        match self {
            UserEvent::SpeechFinal { text } if text.trim().is_empty() => Err(EventError::EmptySpeech),
            UserEvent::GazeOn { target: GazeTarget::WorldRay { origin, direction } }
                if !origin.is_finite() || !direction.is_unit() =>
            {
                Err(EventError::NonUnitDirection)
            }
            UserEvent::Tick { now } if !now.is_finite() || *now < 0.0 => Err(EventError::BadTick),
            _ => Ok(()),
        }
    }
}

/// Signals raised by the session itself (not the user) that move the
/// machine through its reply states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentSignal {
    FillerStarted,
    ReplyStarted { until: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", content = "event", rename_all = "snake_case")]
pub enum FsmInput {
    User(UserEvent),
    Agent(AgentSignal),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum InteractionState {
    Idle,
    Dwelling {
        dwell_started_at: f64,
    },
    Listening {
        listening_since: f64,
        last_user_sound_at: Option<f64>,
        greeted: bool,
        /// Set while the user looks somewhere other than the character.
        gaze_away_since: Option<f64>,
    },
    AwaitingReply {
        filler_active: bool,
        gaze_away_since: Option<f64>,
    },
    AgentSpeaking {
        until: f64,
        gaze_away_since: Option<f64>,
    },
    Ended,
}

impl InteractionState {
    pub fn name(&self) -> &'static str {
        match self {
            InteractionState::Idle => "Idle",
            InteractionState::Dwelling { .. } => "Dwelling",
            InteractionState::Listening { .. } => "Listening",
            InteractionState::AwaitingReply { .. } => "AwaitingReply",
            InteractionState::AgentSpeaking { .. } => "AgentSpeaking",
            InteractionState::Ended => "Ended",
        }
    }

    pub fn is_ended(&self) -> bool {
        matches!(self, InteractionState::Ended)
    }

    fn gaze_away_since(&self, now: f64) -> Option<f64> {
        match self {
            // Idle means the user is not looking at the character.
            InteractionState::Idle => Some(now),
            InteractionState::Dwelling { .. } | InteractionState::Ended => None,
            InteractionState::Listening { gaze_away_since, .. }
            | InteractionState::AwaitingReply { gaze_away_since, .. }
            | InteractionState::AgentSpeaking { gaze_away_since, .. } => *gaze_away_since,
        }
    }

    fn with_gaze_away(&self, away: Option<f64>) -> InteractionState {
        let mut next = self.clone();
        match &mut next {
            InteractionState::Listening { gaze_away_since, .. }
            | InteractionState::AwaitingReply { gaze_away_since, .. }
            | InteractionState::AgentSpeaking { gaze_away_since, .. } => *gaze_away_since = away,
            _ => {}
        }
        next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsmConfig {
    pub dwell_threshold: f64,
    pub greeting_silence_delay: f64,
    pub end_silence_timeout: f64,
    pub end_of_utterance_window: f64,
    pub greeting_text: String,
    /// Stored in normalised form, see [`normalize_command`].
    pub trigger_commands: BTreeSet<String>,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            dwell_threshold: 4.0,
            greeting_silence_delay: 3.0,
            end_silence_timeout: 5.0,
            end_of_utterance_window: 1.2,
            greeting_text: "Hello, do you need help?".to_owned(),
            trigger_commands: ["what is this", "tell me about this"].into_iter().map(str::to_owned).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("trigger_commands must not be empty")]
    NoTriggers,
}

impl FsmConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("dwell_threshold", self.dwell_threshold),
            ("greeting_silence_delay", self.greeting_silence_delay),
            ("end_silence_timeout", self.end_silence_timeout),
            ("end_of_utterance_window", self.end_of_utterance_window),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::NonPositive { field, value });
            }
        }
        if self.trigger_commands.iter().all(|c| normalize_command(c).is_empty()) {
            return Err(ConfigError::NoTriggers);
        }
        Ok(())
    }

    pub fn is_trigger(&self, text: &str) -> bool {
        let normalized = normalize_command(text);
        !normalized.is_empty() && self.trigger_commands.iter().any(|c| normalize_command(c) == normalized)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FsmAction {
    StartRecognizer,
    StopRecognizer,
    EmitGreeting { text: String },
    CaptureGazeTarget,
    SubmitQuery { text: String, needs_object: bool },
    EndConversation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: InteractionState,
    pub actions: Vec<FsmAction>,
}

impl Transition {
    fn stay(state: &InteractionState) -> Self {
        Self { state: state.clone(), actions: Vec::new() }
    }

    fn to(state: InteractionState, actions: Vec<FsmAction>) -> Self {
        Self { state, actions }
    }
}

/// Lowercases, trims, strips terminal punctuation and collapses whitespace.
pub fn normalize_command(text: &str) -> String {
    let collapsed = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .to_owned()
}

/// Applies one user event observed at `at`.
///
/// For [`UserEvent::Tick`] the tick's own timestamp is authoritative. Pairs
/// with no rule self-loop with no actions.
pub fn step(state: &InteractionState, event: &UserEvent, at: f64, config: &FsmConfig) -> Transition {
    use InteractionState as S;
    use UserEvent as E;

    let now = match event {
        E::Tick { now } => *now,
        _ => at,
    };

    if state.is_ended() {
        return Transition::stay(state);
    }

    if let E::VoiceCommand { text } = event {
        if !config.is_trigger(text) {
            return Transition::stay(state);
        }
        return object_query(state, normalize_command(text), now);
    }

    let gaze_away = matches!(event, E::GazeOff | E::GazeOn { target: GazeTarget::WorldRay { .. } | GazeTarget::None });
    let gaze_back = matches!(event, E::GazeOn { target: GazeTarget::Character });

    match state {
        S::Idle => match event {
            E::GazeOn { target: GazeTarget::Character } => {
                Transition::to(S::Dwelling { dwell_started_at: now }, vec![])
            }
            _ => Transition::stay(state),
        },

        S::Dwelling { dwell_started_at } => match event {
            E::Tick { .. } if now >= dwell_started_at + config.dwell_threshold => Transition::to(
                S::Listening { listening_since: now, last_user_sound_at: None, greeted: false, gaze_away_since: None },
                vec![FsmAction::StartRecognizer],
            ),
            _ if gaze_away => Transition::to(S::Idle, vec![]),
            _ => Transition::stay(state),
        },

        S::Listening { listening_since, last_user_sound_at, greeted, gaze_away_since } => match event {
            E::SpeechStarted => Transition::to(
                S::Listening {
                    listening_since: *listening_since,
                    last_user_sound_at: Some(now),
                    greeted: *greeted,
                    gaze_away_since: *gaze_away_since,
                },
                vec![],
            ),
            E::SpeechFinal { text } => {
                let text = text.trim();
                if text.is_empty() {
                    return Transition::stay(state);
                }
                if config.is_trigger(text) {
                    return object_query(state, normalize_command(text), now);
                }
                Transition::to(
                    S::AwaitingReply { filler_active: false, gaze_away_since: *gaze_away_since },
                    vec![FsmAction::SubmitQuery { text: text.to_owned(), needs_object: false }],
                )
            }
            E::Tick { .. } => {
                if let Some(away) = gaze_away_since {
                    let quiet_since = away.max(*listening_since).max(last_user_sound_at.unwrap_or(f64::MIN));
                    if now >= quiet_since + config.end_silence_timeout {
                        return Transition::to(S::Ended, vec![FsmAction::StopRecognizer, FsmAction::EndConversation]);
                    }
                    Transition::stay(state)
                } else if !greeted
                    && last_user_sound_at.is_none()
                    && now >= listening_since + config.greeting_silence_delay
                {
                    Transition::to(
                        S::Listening {
                            listening_since: *listening_since,
                            last_user_sound_at: None,
                            greeted: true,
                            gaze_away_since: None,
                        },
                        vec![FsmAction::EmitGreeting { text: config.greeting_text.clone() }],
                    )
                } else {
                    Transition::stay(state)
                }
            }
            _ if gaze_away && gaze_away_since.is_none() => Transition::to(state.with_gaze_away(Some(now)), vec![]),
            _ if gaze_back => Transition::to(state.with_gaze_away(None), vec![]),
            _ => Transition::stay(state),
        },

        S::AwaitingReply { gaze_away_since, .. } => {
            if gaze_away && gaze_away_since.is_none() {
                Transition::to(state.with_gaze_away(Some(now)), vec![])
            } else if gaze_back {
                Transition::to(state.with_gaze_away(None), vec![])
            } else {
                // Speech while a reply is pending is ignored.
                Transition::stay(state)
            }
        }

        S::AgentSpeaking { until, gaze_away_since } => match event {
            E::AgentSpeechDone => resume_listening(*gaze_away_since, now),
            E::Tick { .. } if now >= *until => resume_listening(*gaze_away_since, now),
            _ if gaze_away && gaze_away_since.is_none() => Transition::to(state.with_gaze_away(Some(now)), vec![]),
            _ if gaze_back => Transition::to(state.with_gaze_away(None), vec![]),
            _ => Transition::stay(state),
        },

        S::Ended => Transition::stay(state),
    }
}

fn object_query(state: &InteractionState, text: String, now: f64) -> Transition {
    Transition::to(
        InteractionState::AwaitingReply { filler_active: false, gaze_away_since: state.gaze_away_since(now) },
        vec![FsmAction::CaptureGazeTarget, FsmAction::SubmitQuery { text, needs_object: true }],
    )
}

fn resume_listening(gaze_away_since: Option<f64>, now: f64) -> Transition {
    // The conversation is already under way, so no proactive greeting.
    Transition::to(
        InteractionState::Listening { listening_since: now, last_user_sound_at: None, greeted: true, gaze_away_since },
        vec![],
    )
}

/// Applies a session-originated signal. Never emits actions.
pub fn signal(state: &InteractionState, signal: &AgentSignal) -> Transition {
    use InteractionState as S;
    let next = match (state, signal) {
        (S::AwaitingReply { gaze_away_since, .. }, AgentSignal::FillerStarted) => {
            S::AwaitingReply { filler_active: true, gaze_away_since: *gaze_away_since }
        }
        (S::AwaitingReply { gaze_away_since, .. }, AgentSignal::ReplyStarted { until })
        | (S::Listening { gaze_away_since, .. }, AgentSignal::ReplyStarted { until }) => {
            S::AgentSpeaking { until: *until, gaze_away_since: *gaze_away_since }
        }
        (S::AgentSpeaking { until: current, gaze_away_since }, AgentSignal::ReplyStarted { until }) => {
            S::AgentSpeaking { until: current.max(*until), gaze_away_since: *gaze_away_since }
        }
        _ => state.clone(),
    };
    Transition::to(next, vec![])
}

/// Applies either kind of input.
pub fn apply(state: &InteractionState, input: &FsmInput, at: f64, config: &FsmConfig) -> Transition {
    match input {
        FsmInput::User(event) => step(state, event, at, config),
        FsmInput::Agent(sig) => signal(state, sig),
    }
}

/// Earliest simulated time at which a `Tick` could change `state`.
pub fn next_deadline(state: &InteractionState, config: &FsmConfig) -> Option<f64> {
    match state {
        InteractionState::Dwelling { dwell_started_at } => Some(dwell_started_at + config.dwell_threshold),
        InteractionState::Listening { listening_since, last_user_sound_at, greeted, gaze_away_since } => {
            match gaze_away_since {
                Some(away) => {
                    let quiet_since = away.max(*listening_since).max(last_user_sound_at.unwrap_or(f64::MIN));
                    Some(quiet_since + config.end_silence_timeout)
                }
                None if !greeted && last_user_sound_at.is_none() => {
                    Some(listening_since + config.greeting_silence_delay)
                }
                None => None,
            }
        }
        InteractionState::AgentSpeaking { until, .. } => Some(*until),
        _ => None,
    }
}

/// One line of a newline-delimited trace log. `state` is the state after
/// the input was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub session: String,
    pub t: f64,
    pub input: FsmInput,
    pub state: InteractionState,
    pub actions: Vec<FsmAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayMismatch {
    pub index: usize,
    pub session: String,
    pub expected: (InteractionState, Vec<FsmAction>),
    pub got: (InteractionState, Vec<FsmAction>),
}

/// Re-drives recorded inputs through the machine, starting each session
/// from `Idle`, and reports every record whose outcome differs.
pub fn replay(records: &[TraceRecord], config: &FsmConfig) -> Vec<ReplayMismatch> {
    let mut states: std::collections::HashMap<&str, InteractionState> = Default::default();
    let mut mismatches = Vec::new();
    for (index, record) in records.iter().enumerate() {
        let current = states.entry(record.session.as_str()).or_insert(InteractionState::Idle);
        let next = apply(current, &record.input, record.t, config);
        if next.state != record.state || next.actions != record.actions {
            mismatches.push(ReplayMismatch {
                index,
                session: record.session.clone(),
                expected: (record.state.clone(), record.actions.clone()),
                got: (next.state.clone(), next.actions.clone()),
            });
        }
        *current = next.state;
    }
    mismatches
}
