//! Spatial anchor registry.
//!
//! Recognised static objects are persisted as anchors (label + pose) grouped
//! by room. A room is identified by its signature, the set of object labels
//! seen there, so identical-looking rooms are told apart by what is in them
//! before their anchors are loaded. Gaze rays are resolved against the loaded
//! anchors with [`hit_test`], which is what lets an object question skip the
//! recognition round trip.
//!
//! Stores serialise to a pretty-printed JSON document; see
//! `docs/formats.md` for the schema.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Quat, Vec3};
use crate::vision::RecognitionResult;

pub const STORE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PLACEMENT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Self { position, orientation: Quat::IDENTITY }
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite() && self.orientation.is_unit()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub room_id: String,
    pub label: String,
    pub position: Vec3,
    pub orientation: Quat,
    pub radius: f64,
    pub created_at: f64,
}

impl Anchor {
    pub fn pose(&self) -> Pose {
        Pose { position: self.position, orientation: self.orientation }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSignature {
    pub room_id: String,
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnchorError {
    #[error("recognition confidence {got} is below the placement threshold {threshold}")]
    ConfidenceTooLow { got: f64, threshold: f64 },
    #[error("an anchor for {label:?} already exists within {radius} m in room {room_id:?} ({existing})")]
    DuplicateAnchor { room_id: String, label: String, radius: f64, existing: String },
    #[error("pose is not valid (non-finite position or non-unit orientation)")]
    InvalidPose,
    #[error("anchor radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("object label must not be empty")]
    EmptyLabel,
    #[error("room id must not be empty")]
    EmptyRoom,
    #[error("unknown room {0:?}")]
    UnknownRoom(String),
    #[error("unknown anchor {0:?}")]
    UnknownAnchor(String),
    #[error("observation contains no labels")]
    EmptyObservation,
    #[error("ray direction is not unit length")]
    NonUnitDirection,
    #[error("malformed anchor store at {position}: {reason}")]
    MalformedStore { position: String, reason: String },
    #[error("unsupported anchor store version {0}")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RoomResolution {
    Room { room_id: String },
    Ambiguous { candidates: Vec<String> },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorStore {
    pub version: u32,
    pub rooms: Vec<RoomSignature>,
    pub anchors: Vec<Anchor>,
}

impl Default for AnchorStore {
    fn default() -> Self {
        Self::new()
    }
}

impl AnchorStore {
    pub fn new() -> Self {
        Self { version: STORE_FORMAT_VERSION, rooms: Vec::new(), anchors: Vec::new() }
    }

    pub fn signature(&self, room_id: &str) -> Option<&RoomSignature> {
        self.rooms.iter().find(|r| r.room_id == room_id)
    }

    /// Records labels observed while scanning a room without placing anchors.
    pub fn register_room<I, S>(&mut self, room_id: &str, labels: I) -> Result<(), AnchorError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if room_id.is_empty() {
            return Err(AnchorError::EmptyRoom);
        }
        let labels: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.iter().any(String::is_empty) {
            return Err(AnchorError::EmptyLabel);
        }
        match self.rooms.iter_mut().find(|r| r.room_id == room_id) {
            Some(sig) => sig.labels.extend(labels),
            None => self.rooms.push(RoomSignature { room_id: room_id.to_owned(), labels }),
        }
        Ok(())
    }

    /// Turns a confident recognition into a new anchor.
    ///
    /// The store is left untouched on error.
    pub fn place_anchor(
        &mut self,
        room_id: &str,
        recognition: &RecognitionResult,
        pose: Pose,
        radius: f64,
        threshold: f64,
        created_at: f64,
    ) -> Result<Anchor, AnchorError> {
        if recognition.confidence < threshold {
            return Err(AnchorError::ConfidenceTooLow { got: recognition.confidence, threshold });
        }
        if room_id.is_empty() {
            return Err(AnchorError::EmptyRoom);
        }
        if recognition.label.is_empty() {
            return Err(AnchorError::EmptyLabel);
        }
        if !pose.is_valid() {
            return Err(AnchorError::InvalidPose);
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(AnchorError::InvalidRadius(radius));
        }
        if let Some(existing) = self.anchors.iter().find(|a| {
            a.room_id == room_id
                && a.label == recognition.label
                && (a.position - pose.position).norm() <= radius
        }) {
            return Err(AnchorError::DuplicateAnchor {
                room_id: room_id.to_owned(),
                label: recognition.label.clone(),
                radius,
                existing: existing.id.clone(),
            });
        }

        let id = self.fresh_id(room_id, &recognition.label);
        let anchor = Anchor {
            id,
            room_id: room_id.to_owned(),
            label: recognition.label.clone(),
            position: pose.position,
            orientation: pose.orientation,
            radius,
            created_at,
        };
        self.register_room(room_id, [recognition.label.clone()])?;
        self.anchors.push(anchor.clone());
        Ok(anchor)
    }

    fn fresh_id(&self, room_id: &str, label: &str) -> String {
        (1..)
            .map(|n| format!("{room_id}/{label}/{n:03}"))
            .find(|id| !self.anchors.iter().any(|a| &a.id == id))
            .expect("unbounded id space")
    }

    pub fn remove_anchor(&mut self, id: &str) -> Result<Anchor, AnchorError> {
        let idx = self
            .anchors
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| AnchorError::UnknownAnchor(id.to_owned()))?;
        Ok(self.anchors.remove(idx))
    }

    /// Picks the room whose signature overlaps `observed` the most.
    ///
    /// The winner must strictly beat every other room; ties are reported as
    /// ambiguous so that a look-alike room never gets the wrong anchors.
    pub fn resolve_room(&self, observed: &BTreeSet<String>) -> Result<RoomResolution, AnchorError> {
        if observed.is_empty() {
            return Err(AnchorError::EmptyObservation);
        }
        let mut best = 0usize;
        let mut candidates: Vec<String> = Vec::new();
        for sig in &self.rooms {
            let overlap = sig.labels.intersection(observed).count();
            if overlap == 0 || overlap < best {
                continue;
            }
            if overlap > best {
                best = overlap;
                candidates.clear();
            }
            candidates.push(sig.room_id.clone());
        }
        candidates.sort();
        Ok(match candidates.len() {
            0 => RoomResolution::Unknown,
            1 => RoomResolution::Room { room_id: candidates.remove(0) },
            _ => RoomResolution::Ambiguous { candidates },
        })
    }

    /// All anchors of `room_id`, ordered by id.
    pub fn load_room(&self, room_id: &str) -> Result<Vec<Anchor>, AnchorError> {
        if self.signature(room_id).is_none() {
            return Err(AnchorError::UnknownRoom(room_id.to_owned()));
        }
        let mut anchors: Vec<Anchor> = self.anchors.iter().filter(|a| a.room_id == room_id).cloned().collect();
        anchors.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(anchors)
    }

    /// Checks every structural invariant of the store.
    pub fn validate(&self) -> Result<(), AnchorError> {
        let malformed = |position: String, reason: &str| AnchorError::MalformedStore {
            position,
            reason: reason.to_owned(),
        };
        let mut room_ids = BTreeSet::new();
        for (i, sig) in self.rooms.iter().enumerate() {
            if sig.room_id.is_empty() {
                return Err(malformed(format!("rooms[{i}]"), "empty room_id"));
            }
            if !room_ids.insert(sig.room_id.as_str()) {
                return Err(malformed(format!("rooms[{i}]"), "duplicate room_id"));
            }
            if sig.labels.is_empty() {
                return Err(malformed(format!("rooms[{i}]"), "room signature has no labels"));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, a) in self.anchors.iter().enumerate() {
            let at = format!("anchors[{i}]");
            if !ids.insert(a.id.as_str()) {
                return Err(malformed(at, "duplicate anchor id"));
            }
            if a.label.is_empty() {
                return Err(malformed(at, "empty label"));
            }
            if !(a.radius > 0.0 && a.radius.is_finite()) {
                return Err(malformed(at, "radius must be positive"));
            }
            if !a.pose().is_valid() {
                return Err(malformed(at, "invalid pose"));
            }
            match self.signature(&a.room_id) {
                None => return Err(malformed(at, "anchor room has no signature")),
                Some(sig) if !sig.labels.contains(&a.label) => {
                    return Err(malformed(at, "anchor label missing from room signature"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn save(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("anchor store is always serialisable");
        out.push('\n');
        out
    }

    pub fn load(input: &str) -> Result<Self, AnchorError> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let position = |e: &serde_json::Error| format!("line {} column {}", e.line(), e.column());
        let header: Header = serde_json::from_str(input)
            .map_err(|e| AnchorError::MalformedStore { position: position(&e), reason: e.to_string() })?;
        if header.version != STORE_FORMAT_VERSION {
            return Err(AnchorError::UnsupportedVersion(header.version));
        }
        let store: AnchorStore = serde_json::from_str(input)
            .map_err(|e| AnchorError::MalformedStore { position: position(&e), reason: e.to_string() })?;
        store.validate()?;
        Ok(store)
    }
}

/// Nearest anchor hit by a forward gaze ray.
///
/// An anchor is hit when its centre projects onto the forward half of the
/// ray and lies within `radius` of it. Nearest projection wins; ties go to
/// the smaller id.
pub fn hit_test<'a>(anchors: &'a [Anchor], origin: Vec3, direction: Vec3) -> Result<Option<&'a Anchor>, AnchorError> {
    if !direction.is_unit() {
        return Err(AnchorError::NonUnitDirection);
    }
    let mut best: Option<(f64, &Anchor)> = None;
    for anchor in anchors {
        let offset = anchor.position - origin;
        let along = offset.dot(direction);
        if along <= 0.0 {
            continue;
        }
        let closest = origin + direction * along;
        if (anchor.position - closest).norm() > anchor.radius {
            continue;
        }
        let better = match best {
            None => true,
            Some((t, current)) => along < t || (along == t && anchor.id < current.id),
        };
        if better {
            best = Some((along, anchor));
        }
    }
    Ok(best.map(|(_, a)| a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, confidence: f64) -> RecognitionResult {
        RecognitionResult { label: label.into(), confidence }
    }

    fn labels(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn garden_store() -> AnchorStore {
        let mut store = AnchorStore::new();
        store.register_room("room1", ["rose", "tulip", "lily", "daisy", "iris"]).unwrap();
        store.register_room("room2", ["orchid", "peony", "lotus", "sunflower"]).unwrap();
        store
    }

    #[test]
    fn place_into_empty_store() {
        let mut store = AnchorStore::new();
        let p = Pose::at(Vec3::new(1.0, 0.0, 2.0));
        let a = store.place_anchor("room1", &rec("rose", 0.92), p, 0.5, 0.6, 0.0).unwrap();
        assert_eq!(store.anchors, vec![a.clone()]);
        assert_eq!(store.signature("room1").unwrap().labels, labels(&["rose"]));
        store.validate().unwrap();

        let near = Pose::at(Vec3::new(1.2, 0.0, 2.1));
        let err = store.place_anchor("room1", &rec("rose", 0.92), near, 0.5, 0.6, 1.0).unwrap_err();
        assert!(matches!(err, AnchorError::DuplicateAnchor { .. }));
        assert_eq!(store.anchors.len(), 1);
    }

    #[test]
    fn low_confidence_is_rejected() {
        let mut store = AnchorStore::new();
        let err = store.place_anchor("room1", &rec("rose", 0.3), Pose::default(), 0.5, 0.6, 0.0).unwrap_err();
        assert_eq!(err, AnchorError::ConfidenceTooLow { got: 0.3, threshold: 0.6 });
        assert!(store.rooms.is_empty());
    }

    #[test]
    fn same_label_in_another_room_is_not_a_duplicate() {
        let mut store = AnchorStore::new();
        store.place_anchor("room1", &rec("rose", 0.9), Pose::default(), 0.5, 0.6, 0.0).unwrap();
        store.place_anchor("room2", &rec("rose", 0.9), Pose::default(), 0.5, 0.6, 0.0).unwrap();
        assert_eq!(store.anchors.len(), 2);
    }

    #[test]
    fn resolves_the_two_garden_rooms() {
        let store = garden_store();
        assert_eq!(
            store.resolve_room(&labels(&["rose"])).unwrap(),
            RoomResolution::Room { room_id: "room1".into() }
        );
        assert_eq!(
            store.resolve_room(&labels(&["lotus", "cactus"])).unwrap(),
            RoomResolution::Room { room_id: "room2".into() }
        );
        assert_eq!(store.resolve_room(&labels(&["cactus"])).unwrap(), RoomResolution::Unknown);
        assert_eq!(store.resolve_room(&BTreeSet::new()), Err(AnchorError::EmptyObservation));
    }

    #[test]
    fn identical_rooms_are_ambiguous() {
        let mut store = AnchorStore::new();
        store.register_room("room2", ["rose", "lily"]).unwrap();
        store.register_room("room1", ["rose", "lily"]).unwrap();
        assert_eq!(
            store.resolve_room(&labels(&["rose"])).unwrap(),
            RoomResolution::Ambiguous { candidates: vec!["room1".into(), "room2".into()] }
        );
    }

    #[test]
    fn load_room_filters_and_sorts() {
        let mut store = AnchorStore::new();
        for (i, (room, label)) in [("room1", "rose"), ("room2", "lotus"), ("room1", "lily"), ("room1", "iris"), ("room2", "peony")]
            .into_iter()
            .enumerate()
        {
            store
                .place_anchor(room, &rec(label, 0.9), Pose::at(Vec3::new(i as f64, 0.0, 0.0)), 0.3, 0.6, 0.0)
                .unwrap();
        }
        let oracle: Vec<&Anchor> = store.anchors.iter().filter(|a| a.room_id == "room1").collect();
        let loaded = store.load_room("room1").unwrap();
        assert_eq!(loaded.len(), oracle.len());
        assert!(loaded.windows(2).all(|w| w[0].id < w[1].id));
        assert!(oracle.iter().all(|a| loaded.contains(a)));
        assert_eq!(store.load_room("room3"), Err(AnchorError::UnknownRoom("room3".into())));
    }

    #[test]
    fn load_room_after_removing_everything_is_empty() {
        let mut store = AnchorStore::new();
        let a = store.place_anchor("room1", &rec("rose", 0.9), Pose::default(), 0.3, 0.6, 0.0).unwrap();
        store.remove_anchor(&a.id).unwrap();
        assert!(store.load_room("room1").unwrap().is_empty());
    }

    #[test]
    fn hit_test_picks_nearest_forward_anchor() {
        let mut store = AnchorStore::new();
        let far = store.place_anchor("r", &rec("far", 0.9), Pose::at(Vec3::new(0.0, 0.0, 5.0)), 0.5, 0.6, 0.0).unwrap();
        let near = store.place_anchor("r", &rec("near", 0.9), Pose::at(Vec3::new(0.1, 0.0, 2.0)), 0.5, 0.6, 0.0).unwrap();
        let dir = Vec3::new(0.0, 0.0, 1.0);
        let hit = hit_test(&store.anchors, Vec3::ZERO, dir).unwrap().unwrap();
        assert_eq!(hit.id, near.id);
        let only_far = [far.clone()];
        let behind = hit_test(&only_far, Vec3::new(0.0, 0.0, 6.0), dir).unwrap();
        assert!(behind.is_none());
        assert!(hit_test(&[], Vec3::ZERO, dir).unwrap().is_none());
        assert_eq!(hit_test(&[far], Vec3::ZERO, Vec3::new(0.0, 0.0, 2.0)), Err(AnchorError::NonUnitDirection));
    }

    #[test]
    fn store_round_trip_and_errors() {
        let mut store = garden_store();
        for (i, label) in ["rose", "tulip", "lily", "daisy", "iris"].into_iter().enumerate() {
            store
                .place_anchor("room1", &rec(label, 0.9), Pose::at(Vec3::new(i as f64 * 0.7, 1.1, 2.0 / 3.0)), 0.25, 0.6, 17.5)
                .unwrap();
        }
        let text = store.save();
        let back = AnchorStore::load(&text).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.save(), text);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(AnchorStore::load(truncated), Err(AnchorError::MalformedStore { .. })));
        let bumped = text.replacen("\"version\": 1", "\"version\": 999", 1);
        assert_eq!(AnchorStore::load(&bumped), Err(AnchorError::UnsupportedVersion(999)));
    }

    #[test]
    fn load_rejects_orphan_anchor() {
        let mut store = AnchorStore::new();
        store.place_anchor("room1", &rec("rose", 0.9), Pose::default(), 0.3, 0.6, 0.0).unwrap();
        store.rooms.clear();
        let err = AnchorStore::load(&store.save()).unwrap_err();
        assert!(matches!(err, AnchorError::MalformedStore { reason, .. } if reason.contains("signature")));
    }
}
