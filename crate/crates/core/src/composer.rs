//! Builds the multi-track performance for one reply.
//!
//! Four tracks play in parallel over the reply's speech duration:
//!
//! - speech: the words, spread proportionally to their length;
//! - body: animation clips chosen from an expert mapping table by greedy
//!   longest-phrase matching, uniformly stretched to span the speech;
//! - face: the reply's sentiment class and level for the whole duration;
//! - viseme: one lip shape per phoneme, equal time slices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{Reply, SentimentClass, SentimentLevel};
use crate::text::words;

/// Documented phoneme inventory (ARPAbet, stress-free).
pub const PHONEME_INVENTORY: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH", "IH", "IY", "JH", "K",
    "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
];

pub fn is_phoneme(symbol: &str) -> bool {
    PHONEME_INVENTORY.contains(&symbol)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComposeError {
    #[error("phonemes present but speech duration is {0}")]
    EmptyDuration(f64),
    #[error("rule mapping.clips: unknown animation clip {0:?}")]
    UnknownClip(String),
    #[error("rule phonemes.inventory: phoneme {0:?} is not in the inventory")]
    UnknownPhoneme(String),
    #[error("rule clips.duration: clip {id:?} has non-positive duration {duration}")]
    BadClipDuration { id: String, duration: f64 },
    #[error("rule clips.unique: clip id {0:?} is defined twice")]
    DuplicateClip(String),
    #[error("rule mapping.keys: mapping table has an empty key")]
    EmptyKey,
    #[error("rule phonemes.fallback: letter fallback is missing {0:?}")]
    MissingLetter(char),
    #[error("rule visemes.total: viseme map has no lip shape for {0:?}")]
    MissingViseme(String),
    #[error("speech rate must be positive, got {0}")]
    BadRate(f64),
    #[error("rule json: cannot parse {what}: {reason}")]
    Parse { what: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationClip {
    pub id: String,
    pub display_name: String,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLibrary {
    pub clips: Vec<AnimationClip>,
}

impl ClipLibrary {
    pub fn get(&self, id: &str) -> Option<&AnimationClip> {
        self.clips.iter().find(|c| c.id == id)
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        let mut ids = BTreeSet::new();
        for clip in &self.clips {
            if !(clip.duration > 0.0 && clip.duration.is_finite()) {
                return Err(ComposeError::BadClipDuration { id: clip.id.clone(), duration: clip.duration });
            }
            if !ids.insert(clip.id.as_str()) {
                return Err(ComposeError::DuplicateClip(clip.id.clone()));
            }
        }
        Ok(())
    }
}

/// Expert-authored phrase → clip map. Keys are stored as lowercase tokens
/// joined by single spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingTable {
    pub entries: BTreeMap<String, String>,
    pub default_clip: String,
}

impl MappingTable {
    pub fn new<I, K, V>(entries: I, default_clip: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        Self {
            entries: entries.into_iter().map(|(k, v)| (words(k.as_ref()).join(" "), v.into())).collect(),
            default_clip: default_clip.into(),
        }
    }

    fn normalized(self) -> Self {
        Self::new(self.entries, self.default_clip)
    }

    pub fn validate(&self, clips: &ClipLibrary) -> Result<(), ComposeError> {
        for (key, clip) in &self.entries {
            if key.is_empty() {
                return Err(ComposeError::EmptyKey);
            }
            if clips.get(clip).is_none() {
                return Err(ComposeError::UnknownClip(clip.clone()));
            }
        }
        if clips.get(&self.default_clip).is_none() {
            return Err(ComposeError::UnknownClip(self.default_clip.clone()));
        }
        Ok(())
    }

    fn longest_key(&self) -> usize {
        self.entries.keys().map(|k| k.split(' ').count()).max().unwrap_or(0)
    }
}

/// One emitted body clip and the token span it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BodyMatch {
    pub clip: String,
    pub tokens: std::ops::Range<usize>,
    /// `false` for a run of unmatched tokens covered by the default clip.
    pub matched: bool,
}

/// Greedy longest-match segmentation of `text` against the mapping table.
pub fn body_segments(text: &str, table: &MappingTable) -> Vec<BodyMatch> {
    let tokens = words(text);
    let longest = table.longest_key();
    let mut out: Vec<BodyMatch> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let hit = (1..=longest.min(tokens.len() - i))
            .rev()
            .find_map(|len| table.entries.get(&tokens[i..i + len].join(" ")).map(|clip| (len, clip)));
        match hit {
            Some((len, clip)) => {
                out.push(BodyMatch { clip: clip.clone(), tokens: i..i + len, matched: true });
                i += len;
            }
            None => {
                match out.last_mut() {
                    Some(gap) if !gap.matched => gap.tokens.end = i + 1,
                    _ => out.push(BodyMatch { clip: table.default_clip.clone(), tokens: i..i + 1, matched: false }),
                }
                i += 1;
            }
        }
    }
    out
}

/// Clip ids for `text`; phrases beat single words, each maximal unmatched
/// run becomes one default clip.
pub fn build_body_sequence(text: &str, table: &MappingTable) -> Vec<String> {
    body_segments(text, table).into_iter().map(|m| m.clip).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeLexicon {
    pub words: BTreeMap<String, Vec<String>>,
    pub letter_fallback: BTreeMap<char, String>,
}

impl PhonemeLexicon {
    pub fn validate(&self) -> Result<(), ComposeError> {
        for c in 'a'..='z' {
            if !self.letter_fallback.contains_key(&c) {
                return Err(ComposeError::MissingLetter(c));
            }
        }
        let symbols = self.words.values().flatten().chain(self.letter_fallback.values());
        for symbol in symbols {
            if !is_phoneme(symbol) {
                return Err(ComposeError::UnknownPhoneme(symbol.clone()));
            }
        }
        Ok(())
    }

    pub fn word(&self, word: &str) -> Vec<String> {
        match self.words.get(word) {
            Some(phonemes) => phonemes.clone(),
            None => word.chars().filter_map(|c| self.letter_fallback.get(&c).cloned()).collect(),
        }
    }
}

/// Lexicon lookup per word, spelling out unknown words letter by letter.
pub fn text_to_phonemes(text: &str, lexicon: &PhonemeLexicon) -> Vec<String> {
    words(text).iter().flat_map(|w| lexicon.word(w)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisemeMap {
    pub shapes: BTreeMap<String, String>,
}

impl VisemeMap {
    pub fn validate(&self) -> Result<(), ComposeError> {
        for p in PHONEME_INVENTORY {
            if !self.shapes.contains_key(p) {
                return Err(ComposeError::MissingViseme(p.to_owned()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSegment {
    pub word: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSegment {
    pub clip: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSegment {
    pub class: SentimentClass,
    pub level: SentimentLevel,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisemeSegment {
    pub shape: String,
    pub phoneme: String,
    pub start: f64,
    pub end: f64,
}

/// Equal per-phoneme slices over `[0, speech_duration]`.
pub fn make_viseme_track(
    phonemes: &[String],
    speech_duration: f64,
    visemes: &VisemeMap,
) -> Result<Vec<VisemeSegment>, ComposeError> {
    if phonemes.is_empty() {
        return Ok(Vec::new());
    }
    if !(speech_duration > 0.0) {
        return Err(ComposeError::EmptyDuration(speech_duration));
    }
    let n = phonemes.len();
    phonemes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let shape = visemes.shapes.get(p).ok_or_else(|| ComposeError::UnknownPhoneme(p.clone()))?;
            Ok(VisemeSegment {
                shape: shape.clone(),
                phoneme: p.clone(),
                start: boundary(i, n, speech_duration),
                end: boundary(i + 1, n, speech_duration),
            })
        })
        .collect()
}

/// `i`-th of `n` equal cut points over `[0, total]`, exact at both ends.
fn boundary(i: usize, n: usize, total: f64) -> f64 {
    if i >= n {
        total
    } else {
        total * i as f64 / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeechRate {
    pub words_per_minute: f64,
    pub minimum: f64,
}

impl Default for SpeechRate {
    fn default() -> Self {
        Self { words_per_minute: 150.0, minimum: 0.5 }
    }
}

pub fn speech_duration(text: &str, rate: &SpeechRate) -> f64 {
    let n = words(text).len() as f64;
    (n * 60.0 / rate.words_per_minute).max(rate.minimum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTimeline {
    pub text: String,
    pub total_duration: f64,
    pub speech_track: Vec<WordSegment>,
    pub body_track: Vec<ClipSegment>,
    pub face_track: Vec<FaceSegment>,
    pub viseme_track: Vec<VisemeSegment>,
}

impl PerformanceTimeline {
    /// Checks ordering, bounds and full face coverage of every track.
    pub fn validate(&self) -> Result<(), String> {
        let total = self.total_duration;
        if !(total > 0.0) {
            return Err(format!("total duration {total} must be positive"));
        }
        let tracks: [(&str, Vec<(f64, f64)>); 4] = [
            ("speech", self.speech_track.iter().map(|s| (s.start, s.end)).collect()),
            ("body", self.body_track.iter().map(|s| (s.start, s.end)).collect()),
            ("face", self.face_track.iter().map(|s| (s.start, s.end)).collect()),
            ("viseme", self.viseme_track.iter().map(|s| (s.start, s.end)).collect()),
        ];
        for (name, spans) in &tracks {
            let mut last_end = 0.0;
            for (i, (start, end)) in spans.iter().enumerate() {
                if !(start < end) {
                    return Err(format!("{name}[{i}]: start {start} is not before end {end}"));
                }
                if *start < last_end {
                    return Err(format!("{name}[{i}]: overlaps previous segment"));
                }
                if *start < 0.0 || *end > total {
                    return Err(format!("{name}[{i}]: [{start}, {end}] outside [0, {total}]"));
                }
                last_end = *end;
            }
        }
        match self.face_track.as_slice() {
            [face] if face.start == 0.0 && face.end == total => Ok(()),
            _ => Err("face track must be a single segment covering the whole duration".into()),
        }
    }
}

/// Everything the composer needs, loaded once and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceAssets {
    pub clips: ClipLibrary,
    pub table: MappingTable,
    pub lexicon: PhonemeLexicon,
    pub visemes: VisemeMap,
    pub rate: SpeechRate,
}

impl PerformanceAssets {
    pub fn from_json(clips: &str, table: &str, lexicon: &str, visemes: &str) -> Result<Self, ComposeError> {
        fn parse<T: serde::de::DeserializeOwned>(what: &'static str, text: &str) -> Result<T, ComposeError> {
            serde_json::from_str(text).map_err(|e| ComposeError::Parse { what, reason: e.to_string() })
        }
        let assets = Self {
            clips: parse("clip library", clips)?,
            table: parse::<MappingTable>("mapping table", table)?.normalized(),
            lexicon: parse("phoneme lexicon", lexicon)?,
            visemes: parse("viseme map", visemes)?,
            rate: SpeechRate::default(),
        };
        assets.validate()?;
        Ok(assets)
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        self.clips.validate()?;
        self.table.validate(&self.clips)?;
        self.lexicon.validate()?;
        self.visemes.validate()?;
        if !(self.rate.words_per_minute > 0.0) {
            return Err(ComposeError::BadRate(self.rate.words_per_minute));
        }
        Ok(())
    }
}

/// Lays `items` head-to-tail over `[0, total]`, scaling their weights so the
/// last one ends exactly at `total`.
fn spread<'a, T>(items: &'a [(T, f64)], total: f64) -> impl Iterator<Item = (&'a T, f64, f64)> + 'a {
    let sum: f64 = items.iter().map(|(_, w)| w).sum();
    let mut acc = 0.0;
    let n = items.len();
    items.iter().enumerate().map(move |(i, (item, w))| {
        let start = total * acc / sum;
        acc += w;
        let end = if i + 1 == n { total } else { total * acc / sum };
        (item, start, end)
    })
}

/// Assembles the full timeline for a reply.
pub fn assemble(reply: &Reply, assets: &PerformanceAssets) -> Result<PerformanceTimeline, ComposeError> {
    let total = speech_duration(&reply.text, &assets.rate);

    let tokens = words(&reply.text);
    let weighted: Vec<(String, f64)> = tokens.iter().map(|w| (w.clone(), w.chars().count() as f64)).collect();
    let speech_track = spread(&weighted, total)
        .map(|(word, start, end)| WordSegment { word: word.clone(), start, end })
        .collect();

    let mut clip_ids = build_body_sequence(&reply.text, &assets.table);
    if clip_ids.is_empty() {
        clip_ids.push(assets.table.default_clip.clone());
    }
    let clips = clip_ids
        .into_iter()
        .map(|id| {
            let duration = assets.clips.get(&id).ok_or_else(|| ComposeError::UnknownClip(id.clone()))?.duration;
            Ok((id, duration))
        })
        .collect::<Result<Vec<_>, ComposeError>>()?;
    let body_track = spread(&clips, total)
        .map(|(clip, start, end)| ClipSegment { clip: clip.clone(), start, end })
        .collect();

    let face_track =
        vec![FaceSegment { class: reply.sentiment_class, level: reply.sentiment_level, start: 0.0, end: total }];

    let phonemes = text_to_phonemes(&reply.text, &assets.lexicon);
    let viseme_track = make_viseme_track(&phonemes, total, &assets.visemes)?;

    Ok(PerformanceTimeline {
        text: reply.text.clone(),
        total_duration: total,
        speech_track,
        body_track,
        face_track,
        viseme_track,
    })
}
