#![allow(dead_code)]

use std::time::Duration;

use docent_core::fixtures::{garden_scenario_with, GENERAL_QUESTIONS, VIEWER};
use docent_core::fsm::{GazeTarget, TraceRecord, UserEvent};
use docent_core::sim::{DriverInput, Scenario, ScriptStep, SessionLog, TimedStep};
use docent_service::api::{Accepted, SessionHandle};
use docent_service::{AppState, Sequenced, ServiceConfig};
use futures::StreamExt;
use serde_json::{json, Value};
use tokio::net::TcpListener;

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
}

/// Binds an ephemeral port; `tweak` sees the final base URL.
pub async fn start_with(tweak: impl FnOnce(&mut ServiceConfig, &str)) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let mut config = ServiceConfig::garden();
    config.recognize_time_scale = 0.0;
    tweak(&mut config, &base);
    let state = AppState::new(config).unwrap();
    tokio::spawn(docent_service::serve(listener, state));
    Server { base, client: reqwest::Client::new() }
}

pub async fn start() -> Server {
    start_with(|_, _| {}).await
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn post(&self, path: &str, body: &Value) -> reqwest::Response {
        self.client.post(self.url(path)).json(body).send().await.unwrap()
    }

    pub async fn create(&self, body: Value) -> SessionHandle {
        let response = self.post("/v1/sessions", &body).await;
        assert_eq!(response.status(), 200, "create {body}");
        response.json().await.unwrap()
    }

    pub async fn event(&self, id: &str, event: &UserEvent) -> Accepted {
        let body = serde_json::to_value(event).unwrap();
        let response = self.post(&format!("/v1/sessions/{id}/events"), &body).await;
        assert_eq!(response.status(), 200, "event {body}");
        response.json().await.unwrap()
    }

    pub async fn history(&self, id: &str) -> Vec<Sequenced> {
        let page: Value =
            self.client.get(self.url(&format!("/v1/sessions/{id}/history"))).send().await.unwrap().json().await.unwrap();
        serde_json::from_value(page["events"].clone()).unwrap()
    }

    /// Opens the event stream and reads up to `limit` events, or until the
    /// stream ends or goes quiet for a second.
    pub async fn read_stream(&self, id: &str, query: &str, last_event_id: Option<u64>, limit: usize) -> Vec<Sequenced> {
        let mut request = self.client.get(self.url(&format!("/v1/sessions/{id}/events{query}")));
        if let Some(last) = last_event_id {
            request = request.header("Last-Event-ID", last.to_string());
        }
        let response = request.send().await.unwrap();
        assert_eq!(response.status(), 200);
        let mut body = response.bytes_stream();
        let mut buffer = String::new();
        let mut events = Vec::new();
        while events.len() < limit {
            let chunk = match tokio::time::timeout(Duration::from_secs(1), body.next()).await {
                Ok(Some(chunk)) => chunk.unwrap(),
                _ => break,
            };
            buffer.push_str(std::str::from_utf8(&chunk).unwrap());
            while let Some(end) = buffer.find("\n\n") {
                let frame: String = buffer.drain(..end + 2).collect();
                if let Some(event) = parse_frame(&frame) {
                    events.push(event);
                }
            }
        }
        events.truncate(limit);
        events
    }
}

/// One server-sent-events frame; the `id` must match the payload's `seq`.
pub fn parse_frame(frame: &str) -> Option<Sequenced> {
    let mut id = None;
    let mut data = String::new();
    for line in frame.lines() {
        if let Some(v) = line.strip_prefix("id:") {
            id = Some(v.trim().parse::<u64>().unwrap());
        } else if let Some(v) = line.strip_prefix("data:") {
            data.push_str(v.trim_start());
        }
    }
    if data.is_empty() {
        return None;
    }
    let event: Sequenced = serde_json::from_str(&data).unwrap();
    assert_eq!(id, Some(event.seq));
    Some(event)
}

pub fn ray_to(scenario: &Scenario, room: &str, label: &str) -> GazeTarget {
    let object = scenario.room(room).unwrap().object(label).unwrap();
    let direction = (object.pose.position - VIEWER).normalized().unwrap();
    GazeTarget::WorldRay { origin: VIEWER, direction }
}

pub fn tick(now: f64) -> UserEvent {
    UserEvent::Tick { now }
}

pub fn garden(room: &str, anchored: bool) -> Value {
    json!({ "binding": format!("garden/{room}"), "anchored": anchored })
}

/// What a visitor asks after catching the guide's eye.
#[derive(Debug, Clone, Copy)]
pub enum Ask {
    General(usize),
    Gazed(usize),
    Facing(usize),
}

/// A one-visit garden scenario with the given questions.
pub fn visit(room: usize, anchored: bool, asks: &[Ask]) -> Scenario {
    let mut scenario = garden_scenario_with(2);
    scenario.anchored = anchored;
    let mut script = scenario.scripts.swap_remove(room % 2);
    let labels: Vec<String> = scenario.room(&script.room).unwrap().objects.iter().map(|o| o.label.clone()).collect();
    let mut steps = vec![
        TimedStep { after: 0.5, step: ScriptStep::EnterRoom { view: None } },
        TimedStep { after: 0.5, step: ScriptStep::LookAtCharacter },
    ];
    for ask in asks {
        let step = match *ask {
            Ask::General(i) => ScriptStep::AskGeneral { text: GENERAL_QUESTIONS[i % GENERAL_QUESTIONS.len()].into() },
            Ask::Gazed(i) => ScriptStep::AskAboutObject { label: labels[i % labels.len()].clone(), text: None, gaze: true },
            Ask::Facing(i) => ScriptStep::AskAboutObject { label: labels[i % labels.len()].clone(), text: None, gaze: false },
        };
        steps.push(TimedStep { after: 1.0, step });
    }
    steps.push(TimedStep { after: 1.0, step: ScriptStep::Leave });
    script.steps = steps;
    scenario.scripts = vec![script];
    scenario
}

impl Server {
    /// Feeds a recorded session's inputs to a fresh service session and
    /// returns its trace and numbered outputs.
    pub async fn replay(&self, log: &SessionLog, anchored: bool, seed: u64) -> (Vec<TraceRecord>, Vec<Sequenced>) {
        let handle = self
            .create(json!({ "binding": format!("garden/{}", log.room), "anchored": anchored, "seed": seed }))
            .await;
        let id = &handle.id;
        for input in &log.inputs {
            let (path, body) = match input {
                DriverInput::Event { event } => ("events", serde_json::to_value(event).unwrap()),
                DriverInput::Room { scene_ref } => ("room", json!({ "scene_ref": scene_ref })),
                DriverInput::Facing { label } => ("camera", json!({ "facing": label })),
            };
            let response = self.post(&format!("/v1/sessions/{id}/{path}"), &body).await;
            assert_eq!(response.status(), 200, "{input:?}");
        }
        let mut trace: Vec<TraceRecord> =
            self.client.get(self.url(&format!("/v1/sessions/{id}/trace"))).send().await.unwrap().json().await.unwrap();
        for record in &mut trace {
            record.session = log.id.clone();
        }
        (trace, self.history(id).await)
    }
}
