use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{respond, DialogueContext, KnowledgeBase, Query, Reply, SentimentLexicon};
use crate::fsm::GazeTarget;
use crate::geometry::Vec3;
use crate::latency::{LatencySampler, ProcessingModel};
use crate::vision::{RecognitionRequest, VisionService};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChatError {
    #[error("chatbot timed out after {elapsed:.3} s")]
    Timeout { elapsed: f64 },
    #[error("chatbot unavailable: {0}")]
    Unavailable(String),
}

impl ChatError {
    pub fn elapsed(&self) -> f64 {
        match self {
            ChatError::Timeout { elapsed } => *elapsed,
            ChatError::Unavailable(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatOutcome {
    pub reply: Reply,
    pub context: DialogueContext,
    pub elapsed: f64,
}

pub trait ChatService: Send {
    fn respond(&mut self, query: &Query, context: &DialogueContext) -> Result<ChatOutcome, ChatError>;
}

/// The knowledge-base chatbot with a sampled round-trip latency.
///
/// Clones share the latency stream.
#[derive(Debug, Clone)]
pub struct LocalChatbot {
    kb: Arc<KnowledgeBase>,
    lexicon: Arc<SentimentLexicon>,
    latency: Arc<Mutex<LatencySampler>>,
}

impl LocalChatbot {
    pub fn new(kb: Arc<KnowledgeBase>, lexicon: Arc<SentimentLexicon>, latency: LatencySampler) -> Self {
        Self { kb, lexicon, latency: Arc::new(Mutex::new(latency)) }
    }
}

impl ChatService for LocalChatbot {
    fn respond(&mut self, query: &Query, context: &DialogueContext) -> Result<ChatOutcome, ChatError> {
        let (reply, context) = respond(query, context, &self.kb, &self.lexicon);
        let elapsed = self.latency.lock().expect("latency sampler poisoned").sample();
        Ok(ChatOutcome { reply, context, elapsed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub position: Vec3,
}

/// Stand-in for the headset camera: turns what the user is looking at into
/// a scene reference the recognition endpoint understands.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneCamera {
    pub room_id: String,
    pub objects: Vec<SceneObject>,
    /// Object the user's head points at when no gaze ray is available.
    pub facing: Option<String>,
    pub view_radius: f64,
}

impl SceneCamera {
    pub fn new(room_id: impl Into<String>, objects: Vec<SceneObject>) -> Self {
        Self { room_id: room_id.into(), objects, facing: None, view_radius: 0.5 }
    }

    pub fn view_ref(&self, label: &str) -> String {
        format!("{}/{}_view", self.room_id, label)
    }

    /// Picks the scene object a gaze ray points at (nearest along the ray
    /// within `view_radius`), falling back to the facing hint.
    pub fn capture(&self, gaze: &GazeTarget) -> RecognitionRequest {
        let seen = match gaze {
            GazeTarget::WorldRay { origin, direction } => self
                .objects
                .iter()
                .filter_map(|o| {
                    let offset = o.position - *origin;
                    let along = offset.dot(*direction);
                    let off_axis = offset.cross(*direction).norm();
                    (along > 0.0 && off_axis <= self.view_radius).then_some((along, o))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, o)| o.label.clone()),
            _ => None,
        };
        let label = seen.or_else(|| self.facing.clone());
        RecognitionRequest {
            scene_ref: match label {
                Some(label) => self.view_ref(&label),
                None => format!("{}/empty_view", self.room_id),
            },
        }
    }
}

pub struct Services {
    pub vision: Box<dyn VisionService>,
    pub chatbot: Box<dyn ChatService>,
    pub camera: SceneCamera,
    pub processing: ProcessingModel,
}
