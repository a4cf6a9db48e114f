//! Generators and brute-force oracles shared by the property tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use docent_core::anchor::{Anchor, AnchorStore, RoomResolution};
use docent_core::composer::{assemble, text_to_phonemes, MappingTable, PerformanceAssets};
use docent_core::dialogue::{respond, DialogueContext, KnowledgeBase, Query, Reply, SentimentClass, SentimentLevel, SentimentLexicon};
use docent_core::fsm::{self, AgentSignal, FsmAction, FsmConfig, FsmInput, GazeTarget, InteractionState, TraceRecord, UserEvent};
use docent_core::geometry::{Quat, Vec3};
use docent_core::text::words;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

/// Draws `n` values from `strategy` with a fixed-seed runner.
pub fn sample<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n).map(|_| strategy.new_tree(&mut runner).expect("strategy yields a value").current()).collect()
}

// ---------------------------------------------------------------- fsm

#[derive(Debug, Clone, PartialEq)]
pub enum TraceStep {
    Event(UserEvent),
    Advance(f64),
    Filler,
    Reply(f64),
}

fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter_map("non-degenerate", |(x, y, z)| Vec3::new(x, y, z).normalized().filter(|v| v.norm() > 0.5))
}

fn user_event() -> impl Strategy<Value = UserEvent> {
    prop_oneof![
        6 => Just(UserEvent::GazeOn { target: GazeTarget::Character }),
        2 => unit_vector().prop_map(|direction| UserEvent::GazeOn {
            target: GazeTarget::WorldRay { origin: Vec3::ZERO, direction }
        }),
        1 => Just(UserEvent::GazeOn { target: GazeTarget::None }),
        3 => Just(UserEvent::GazeOff),
        2 => Just(UserEvent::SpeechStarted),
        2 => prop::sample::select(vec!["what color is it", "hello", "What is this?", "tell me about this"])
            .prop_map(|t| UserEvent::SpeechFinal { text: t.to_owned() }),
        1 => prop::sample::select(vec!["what is this", "Tell me about this!", "open the door"])
            .prop_map(|t| UserEvent::VoiceCommand { text: t.to_owned() }),
        1 => Just(UserEvent::AgentSpeechDone),
    ]
}

fn advance() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => 0.01..1.0f64,
        2 => 1.0..3.5f64,
        2 => 3.9..4.1f64,
        1 => 4.0..8.0f64,
        1 => prop::sample::select(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
    ]
}

pub fn trace_step() -> impl Strategy<Value = TraceStep> {
    prop_oneof![
        8 => user_event().prop_map(TraceStep::Event),
        8 => advance().prop_map(TraceStep::Advance),
        1 => Just(TraceStep::Filler),
        2 => (0.5..6.0f64).prop_map(TraceStep::Reply),
    ]
}

pub fn trace(max_len: usize) -> impl Strategy<Value = Vec<TraceStep>> {
    prop::collection::vec(trace_step(), 0..=max_len)
}

/// Timestamped machine inputs for a generated trace. Time starts at 0 and
/// only advances on ticks.
pub fn materialize(steps: &[TraceStep]) -> Vec<(f64, FsmInput)> {
    let mut now = 0.0;
    steps
        .iter()
        .map(|step| match step {
            TraceStep::Event(e) => (now, FsmInput::User(e.clone())),
            TraceStep::Advance(dt) => {
                now += dt;
                (now, FsmInput::User(UserEvent::Tick { now }))
            }
            TraceStep::Filler => (now, FsmInput::Agent(AgentSignal::FillerStarted)),
            TraceStep::Reply(d) => (now, FsmInput::Agent(AgentSignal::ReplyStarted { until: now + d })),
        })
        .collect()
}

pub fn drive(inputs: &[(f64, FsmInput)], config: &FsmConfig) -> Vec<TraceRecord> {
    let mut state = InteractionState::Idle;
    inputs
        .iter()
        .map(|(t, input)| {
            let next = fsm::apply(&state, input, *t, config);
            state = next.state.clone();
            TraceRecord { session: "p".into(), t: *t, input: input.clone(), state: next.state, actions: next.actions }
        })
        .collect()
}

/// Brute-force dwell check: every `StartRecognizer` must be preceded by an
/// unbroken stretch of gaze on the character at least `dwell` long.
pub fn dwell_violations(records: &[TraceRecord], dwell: f64) -> Vec<String> {
    let mut on_since: Option<f64> = None;
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if let FsmInput::User(e) = &r.input {
            match e {
                UserEvent::GazeOn { target: GazeTarget::Character } => {
                    on_since.get_or_insert(r.t);
                }
                UserEvent::GazeOn { .. } | UserEvent::GazeOff => on_since = None,
                _ => {}
            }
        }
        if r.actions.contains(&FsmAction::StartRecognizer) {
            let ok = on_since.is_some_and(|s| r.t >= s + dwell);
            if !ok {
                out.push(format!("record {i}: StartRecognizer at {} with gaze on since {on_since:?}", r.t));
            }
        }
    }
    out
}

/// At most one greeting per uninterrupted stay in `Listening`.
pub fn greeting_violations(records: &[TraceRecord]) -> Vec<String> {
    let mut prev_listening = false;
    let mut greetings = 0;
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let listening = matches!(r.state, InteractionState::Listening { .. });
        let greeted_now = r.actions.iter().filter(|a| matches!(a, FsmAction::EmitGreeting { .. })).count();
        if listening && !prev_listening {
            greetings = 0;
        }
        greetings += greeted_now;
        if greetings > 1 {
            out.push(format!("record {i}: {greetings} greetings in one listening episode"));
        }
        prev_listening = listening;
    }
    out
}

/// Continues a trace with the user looking away and staying silent; every
/// live conversation must end. A pending reply is delivered first, as the
/// session always does.
pub fn silence_reaches_end(records: &[TraceRecord], config: &FsmConfig) -> Result<(), String> {
    let mut state = records.last().map_or(InteractionState::Idle, |r| r.state.clone());
    let mut now = records
        .iter()
        .filter_map(|r| match r.input {
            FsmInput::User(UserEvent::Tick { now }) => Some(now),
            _ => None,
        })
        .fold(0.0, f64::max);
    if !matches!(
        state,
        InteractionState::Listening { .. } | InteractionState::AwaitingReply { .. } | InteractionState::AgentSpeaking { .. }
    ) {
        return Ok(());
    }
    if matches!(state, InteractionState::AwaitingReply { .. }) {
        state = fsm::signal(&state, &AgentSignal::ReplyStarted { until: now + 2.0 }).state;
    }
    state = fsm::step(&state, &UserEvent::GazeOff, now, config).state;
    let limit = now + 2.0 + config.end_silence_timeout + config.greeting_silence_delay + 10.0;
    while now < limit {
        now += 0.25;
        state = fsm::step(&state, &UserEvent::Tick { now }, now, config).state;
        if state.is_ended() {
            return Ok(());
        }
    }
    Err(format!("still {} at {now}", state.name()))
}

/// Every FSM property on one trace: dwell, single greeting, silence ends
/// the conversation, replay reproduces the records.
pub fn trace_violations(steps: &[TraceStep], config: &FsmConfig) -> Vec<String> {
    let inputs = materialize(steps);
    let records = drive(&inputs, config);
    let mut out = dwell_violations(&records, config.dwell_threshold);
    out.extend(greeting_violations(&records));
    if let Err(e) = silence_reaches_end(&records, config) {
        out.push(format!("silence: {e}"));
    }
    if !fsm::replay(&records, config).is_empty() || drive(&inputs, config) != records {
        out.push("replay differs".into());
    }
    out
}

// ----------------------------------------------------------- composer

/// Vocabulary for random tables and texts: small, so phrases collide.
pub const VOCAB: [&str; 8] = ["let", "me", "think", "hello", "see", "this", "rose", "now"];

pub fn random_table() -> impl Strategy<Value = MappingTable> {
    let key = prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 1..=4).prop_map(|ws| ws.join(" "));
    prop::collection::btree_map(key, prop::sample::select(vec!["A", "B", "C", "D", "E"]), 0..=20)
        .prop_map(|entries| MappingTable::new(entries, "Default"))
}

pub fn random_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(VOCAB.to_vec()), prop::sample::select(vec![" ", ", ", ". ", "! "])), 0..=12)
        .prop_map(|ws| ws.into_iter().map(|(w, sep)| format!("{w}{sep}")).collect::<String>())
}

/// Longest key matching at each position, found by scanning every key, then
/// a left-to-right walk taking the longest match and merging unmatched runs
/// into one default clip.
pub fn maximal_munch_oracle(text: &str, table: &MappingTable) -> Vec<String> {
    let tokens = words(text);
    let keys: Vec<(Vec<String>, &String)> =
        table.entries.iter().map(|(k, v)| (k.split(' ').map(str::to_owned).collect(), v)).collect();
    let best: Vec<Option<(usize, &String)>> = (0..tokens.len())
        .map(|i| {
            keys.iter()
                .filter(|(k, _)| i + k.len() <= tokens.len() && tokens[i..i + k.len()] == k[..])
                .map(|(k, v)| (k.len(), *v))
                .max_by_key(|(len, _)| *len)
        })
        .collect();
    let mut out = Vec::new();
    let mut in_gap = false;
    let mut i = 0;
    while i < tokens.len() {
        match best[i] {
            Some((len, clip)) => {
                out.push(clip.clone());
                in_gap = false;
                i += len;
            }
            None => {
                if !in_gap {
                    out.push(table.default_clip.clone());
                    in_gap = true;
                }
                i += 1;
            }
        }
    }
    out
}

pub fn random_reply() -> impl Strategy<Value = Reply> {
    let word = prop_oneof![
        3 => prop::sample::select(vec![
            "hello", "let", "me", "think", "this", "rose", "is", "a", "beautiful", "flower", "smell", "garden",
            "nine", "not", "sure", "tall", "the", "sun",
        ]).prop_map(str::to_owned),
        1 => "[a-z]{1,9}",
    ];
    let class = prop::sample::select(vec![
        SentimentClass::Joy, SentimentClass::Angry, SentimentClass::Sad, SentimentClass::Fear, SentimentClass::Neutral,
    ]);
    let level = prop::sample::select(vec![SentimentLevel::Low, SentimentLevel::Medium, SentimentLevel::High]);
    (prop::collection::vec(word, 0..30), class, level).prop_map(|(ws, sentiment_class, sentiment_level)| Reply {
        text: ws.join(" "),
        sentiment_class,
        sentiment_level,
    })
}

/// Track ordering, bounds, full face coverage and one viseme per phoneme.
pub fn timeline_violations(reply: &Reply, assets: &PerformanceAssets) -> Vec<String> {
    let timeline = match assemble(reply, assets) {
        Ok(t) => t,
        Err(e) => return vec![format!("assemble: {e}")],
    };
    let mut out = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            out.push(format!("{what} for {:?}", reply.text));
        }
    };
    let total = timeline.total_duration;
    check(timeline.validate().is_ok(), "validate");
    check(timeline.viseme_track.len() == text_to_phonemes(&reply.text, &assets.lexicon).len(), "viseme count");
    check(timeline.speech_track.len() == words(&reply.text).len(), "word count");
    check(timeline.body_track.first().is_some_and(|b| b.start == 0.0), "body start");
    check(timeline.body_track.last().is_some_and(|b| b.end == total), "body end");
    check(timeline.viseme_track.first().is_none_or(|v| v.start == 0.0), "viseme start");
    check(timeline.viseme_track.last().is_none_or(|v| v.end == total), "viseme end");
    check(timeline.speech_track.last().is_none_or(|w| w.end == total), "speech end");
    check(
        timeline.face_track.len() == 1
            && timeline.face_track[0].class == reply.sentiment_class
            && timeline.face_track[0].level == reply.sentiment_level,
        "face",
    );
    out
}

// ------------------------------------------------------------ dialogue

/// Every (object, intent, pattern) triple of a knowledge base, with the
/// pattern spelled out as a question.
pub fn kb_questions(kb: &KnowledgeBase) -> Vec<(String, String, String, String)> {
    let mut out = Vec::new();
    for (object, intents) in &kb.objects {
        for intent in intents {
            for pattern in &intent.patterns {
                let text = pattern.iter().cloned().collect::<Vec<_>>().join(" ");
                out.push((object.clone(), intent.intent.clone(), text, intent.answer.clone()));
            }
        }
    }
    out
}

/// Asks every question once with the object named and once as a follow-up
/// after "what is this"; returns the number of cases and the mismatches.
pub fn follow_up_failures(kb: &KnowledgeBase, lexicon: &SentimentLexicon) -> (usize, Vec<String>) {
    let cases = kb_questions(kb);
    let mut failures = Vec::new();
    for (object, intent, text, answer) in &cases {
        let (explicit, _) = respond(&Query::about(text.clone(), object.clone()), &DialogueContext::default(), kb, lexicon);
        let (_, ctx) = respond(&Query::about("what is this", object.clone()), &DialogueContext::default(), kb, lexicon);
        let (follow_up, _) = respond(&Query::new(text.clone()), &ctx, kb, lexicon);
        if explicit.text != *answer || follow_up != explicit {
            failures.push(format!("{object}/{intent} via {text:?}"));
        }
    }
    (cases.len(), failures)
}

// ------------------------------------------------------------- anchors

pub fn anchor_set(max: usize) -> impl Strategy<Value = Vec<Anchor>> {
    prop::collection::vec(((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 0.05..1.0f64), 0..=max).prop_map(|specs| {
        specs
            .into_iter()
            .enumerate()
            .map(|(i, ((x, y, z), radius))| Anchor {
                id: format!("room/obj{i:03}/001"),
                room_id: "room".into(),
                label: format!("obj{i:03}"),
                position: Vec3::new(x, y, z),
                orientation: Quat::IDENTITY,
                radius,
                created_at: 0.0,
            })
            .collect()
    })
}

pub fn ray() -> impl Strategy<Value = (Vec3, Vec3)> {
    ((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), unit_vector()).prop_map(|((x, y, z), d)| (Vec3::new(x, y, z), d))
}

/// Point-to-line distance by cross product for every anchor, keep those in
/// front and within radius, sort by (distance along the ray, id).
pub fn hit_oracle<'a>(anchors: &'a [Anchor], origin: Vec3, direction: Vec3) -> Option<&'a Anchor> {
    let mut hits: Vec<(f64, &Anchor)> = anchors
        .iter()
        .filter_map(|a| {
            let v = a.position - origin;
            let t = v.dot(direction);
            let off_axis = v.cross(direction).norm();
            (t > 0.0 && off_axis <= a.radius).then_some((t, a))
        })
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.id.cmp(&y.1.id)));
    hits.first().map(|(_, a)| *a)
}

/// The two-room garden signature store.
pub fn garden_signatures() -> AnchorStore {
    let mut store = AnchorStore::new();
    store.register_room("room1", ["rose", "tulip", "lily", "daisy", "iris"]).unwrap();
    store.register_room("room2", ["orchid", "peony", "lotus", "sunflower"]).unwrap();
    store
}

/// Every garden flower names its own room, a mixed view is resolved by
/// overlap, an unknown flower is unknown, and twin rooms are ambiguous.
pub fn room_resolution_failures() -> Vec<String> {
    let store = garden_signatures();
    let mut expected: Vec<(Vec<&str>, RoomResolution)> = Vec::new();
    for flower in ["rose", "tulip", "lily", "daisy", "iris"] {
        expected.push((vec![flower], RoomResolution::Room { room_id: "room1".into() }));
    }
    for flower in ["orchid", "peony", "lotus", "sunflower"] {
        expected.push((vec![flower], RoomResolution::Room { room_id: "room2".into() }));
    }
    expected.push((vec!["sunflower", "lotus"], RoomResolution::Room { room_id: "room2".into() }));
    expected.push((vec!["cactus"], RoomResolution::Unknown));
    let mut failures: Vec<String> = expected
        .into_iter()
        .filter_map(|(labels, want)| {
            let got = store.resolve_room(&label_set(&labels));
            (got.as_ref() != Ok(&want)).then(|| format!("{labels:?}: {got:?}, expected {want:?}"))
        })
        .collect();

    let mut twins = AnchorStore::new();
    twins.register_room("room1", ["rose", "tulip"]).unwrap();
    twins.register_room("room2", ["rose", "tulip"]).unwrap();
    let got = twins.resolve_room(&label_set(&["rose"]));
    if got != Ok(RoomResolution::Ambiguous { candidates: vec!["room1".into(), "room2".into()] }) {
        failures.push(format!("twins: {got:?}"));
    }
    failures
}

pub fn label_set(labels: &[&str]) -> BTreeSet<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

pub fn count_by<K: Ord, T>(items: &[T], key: impl Fn(&T) -> K) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(key(i)).or_insert(0) += 1;
    }
    m
}
