//! The botanical-garden demo: two rooms, nine flowers, two guides.
//!
//! Asset files live under `assets/garden/` and are compiled in, so the
//! simulator, the service and the tests all see the same data.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::anchor::Pose;
use crate::composer::PerformanceAssets;
use crate::dialogue::{KnowledgeBase, SentimentLexicon};
use crate::geometry::{Quat, Vec3};
use crate::sim::{ObjectSpec, RoomSpec, Scenario, ScriptStep, TimedStep, UserEventScript};
use crate::vision::RecognitionResult;

pub const KNOWLEDGE_BASE_JSON: &str = include_str!("../assets/garden/knowledge_base.json");
pub const SENTIMENT_LEXICON_JSON: &str = include_str!("../assets/garden/sentiment_lexicon.json");
pub const CLIPS_JSON: &str = include_str!("../assets/garden/clips.json");
pub const MAPPING_TABLE_JSON: &str = include_str!("../assets/garden/mapping_table.json");
pub const PHONEME_LEXICON_JSON: &str = include_str!("../assets/garden/phoneme_lexicon.json");
pub const VISEMES_JSON: &str = include_str!("../assets/garden/visemes.json");
pub const VISION_FIXTURES_JSON: &str = include_str!("../assets/garden/vision_fixtures.json");

/// Where the visitor stands in every room, at eye height.
pub const VIEWER: Vec3 = Vec3 { x: 0.0, y: 1.6, z: 0.0 };
/// Flowers stand on a ring around the viewer.
const RING_RADIUS: f64 = 2.5;
const FLOWER_HEIGHT: f64 = 1.0;

pub const ROOM1_FLOWERS: [&str; 5] = ["rose", "tulip", "lily", "daisy", "iris"];
pub const ROOM2_FLOWERS: [&str; 4] = ["orchid", "peony", "lotus", "sunflower"];

pub const GENERAL_QUESTIONS: [&str; 5] =
    ["hello there", "who are you", "can you help me", "how many flowers are in this garden", "thank you"];

pub fn knowledge_base() -> KnowledgeBase {
    KnowledgeBase::from_json(KNOWLEDGE_BASE_JSON).expect("bundled knowledge base is valid")
}

pub fn sentiment_lexicon() -> SentimentLexicon {
    SentimentLexicon::from_json(SENTIMENT_LEXICON_JSON).expect("bundled sentiment lexicon is valid")
}

pub fn performance_assets() -> PerformanceAssets {
    PerformanceAssets::from_json(CLIPS_JSON, MAPPING_TABLE_JSON, PHONEME_LEXICON_JSON, VISEMES_JSON)
        .expect("bundled performance assets are valid")
}

/// Scene reference → recognition answer for the stub endpoint.
pub fn vision_fixtures() -> BTreeMap<String, RecognitionResult> {
    #[derive(Deserialize)]
    struct Raw {
        fixtures: BTreeMap<String, RecognitionResult>,
    }
    let raw: Raw = serde_json::from_str(VISION_FIXTURES_JSON).expect("bundled vision fixtures are valid");
    raw.fixtures
}

/// Flowers evenly spaced on the ring, first one straight ahead (+z).
fn ring(labels: &[&str]) -> Vec<ObjectSpec> {
    let n = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let angle = std::f64::consts::TAU * i as f64 / n;
            ObjectSpec {
                label: (*label).to_owned(),
                pose: Pose {
                    position: Vec3::new(RING_RADIUS * angle.sin(), FLOWER_HEIGHT, RING_RADIUS * angle.cos()),
                    orientation: Quat::IDENTITY,
                },
            }
        })
        .collect()
}

pub fn garden_rooms() -> Vec<RoomSpec> {
    vec![
        RoomSpec { room_id: "room1".into(), objects: ring(&ROOM1_FLOWERS) },
        RoomSpec { room_id: "room2".into(), objects: ring(&ROOM2_FLOWERS) },
    ]
}

/// One visit: load the room, catch the guide's eye, ask one general and one
/// flower question, walk away.
pub fn visit_script(room: &RoomSpec, index: usize, start: f64) -> UserEventScript {
    let flower = &room.objects[index % room.objects.len()].label;
    let question = GENERAL_QUESTIONS[index % GENERAL_QUESTIONS.len()];
    UserEventScript {
        room: room.room_id.clone(),
        steps: vec![
            TimedStep { after: start, step: ScriptStep::EnterRoom { view: None } },
            TimedStep { after: 0.5, step: ScriptStep::LookAtCharacter },
            TimedStep { after: 1.0, step: ScriptStep::AskGeneral { text: question.to_owned() } },
            TimedStep { after: 1.0, step: ScriptStep::AskAboutObject { label: flower.clone(), text: None, gaze: true } },
            TimedStep { after: 1.0, step: ScriptStep::Leave },
        ],
    }
}

/// The garden scenario with `visits` sessions alternating between rooms.
pub fn garden_scenario_with(visits: usize) -> Scenario {
    let rooms = garden_rooms();
    let scripts = (0..visits).map(|i| visit_script(&rooms[i % rooms.len()], i / rooms.len(), i as f64)).collect();
    Scenario {
        name: "garden".into(),
        characters: [("room1".to_owned(), "Girl".to_owned()), ("room2".to_owned(), "Boy".to_owned())].into(),
        rooms,
        viewer: VIEWER,
        anchored: false,
        scripts,
    }
}

/// Thirty visits: thirty room loads, thirty general and thirty flower
/// questions.
pub fn garden_scenario() -> Scenario {
    garden_scenario_with(30)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_assets_load() {
        let kb = knowledge_base();
        assert_eq!(kb.objects.len(), 9);
        sentiment_lexicon();
        let assets = performance_assets();
        assert_eq!(assets.clips.clips.len(), 30);
        assert_eq!(vision_fixtures().len(), 9);
    }

    #[test]
    fn every_flower_has_a_view() {
        let fixtures = vision_fixtures();
        for room in garden_rooms() {
            for object in &room.objects {
                let hit = &fixtures[&format!("{}/{}_view", room.room_id, object.label)];
                assert_eq!(hit.label, object.label);
                assert!(hit.confidence >= crate::anchor::DEFAULT_PLACEMENT_THRESHOLD);
            }
        }
    }

    #[test]
    fn anchored_store_has_five_and_four() {
        let scenario = crate::sim::anchored_variant(&garden_scenario());
        let store = crate::sim::build_store(&scenario, &vision_fixtures(), 0.35, 0.6).unwrap();
        assert_eq!(store.load_room("room1").unwrap().len(), 5);
        assert_eq!(store.load_room("room2").unwrap().len(), 4);
        let bare = crate::sim::build_store(&garden_scenario(), &vision_fixtures(), 0.35, 0.6).unwrap();
        assert!(bare.load_room("room1").unwrap().is_empty());
    }
}
