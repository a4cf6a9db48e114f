//! Knowledge-base chatbot with a lexicon sentiment engine.
//!
//! A query is `(text, optional object label)` and the reply is
//! `(text, sentiment class, sentiment level)`. Object context sticks between
//! turns so follow-ups ("what color is it?") do not need the user to look at
//! the object again.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::words;

/// Minimum fraction of a pattern's keywords that must appear in the text.
pub const MATCH_THRESHOLD: f64 = 0.5;
pub const HISTORY_CAP: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), object: None }
    }

    pub fn about(text: impl Into<String>, object: impl Into<String>) -> Self {
        Self { text: text.into(), object: Some(object.into()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentimentClass {
    Joy,
    Angry,
    Sad,
    Fear,
    Neutral,
}

impl SentimentClass {
    /// Scored classes in argmax tie-break order.
    pub const EMOTIONS: [SentimentClass; 4] =
        [SentimentClass::Joy, SentimentClass::Angry, SentimentClass::Sad, SentimentClass::Fear];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentimentLevel {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub text: String,
    pub sentiment_class: SentimentClass,
    pub sentiment_level: SentimentLevel,
}

impl Reply {
    pub fn neutral(text: impl Into<String>) -> Self {
        Self { text: text.into(), sentiment_class: SentimentClass::Neutral, sentiment_level: SentimentLevel::Low }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub intent: String,
    pub patterns: Vec<BTreeSet<String>>,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub objects: BTreeMap<String, Vec<Intent>>,
    pub general: Vec<Intent>,
    pub fallback: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DialogueError {
    #[error("rule kb.fallback: knowledge base must define a non-empty fallback answer")]
    MissingFallback,
    #[error("rule kb.patterns: intent {0:?} needs at least one non-empty keyword set")]
    EmptyPatterns(String),
    #[error("rule kb.answer: intent {0:?} has an empty answer")]
    EmptyAnswer(String),
    #[error("rule kb.intent_unique: intent {intent:?} is defined twice for {scope:?}")]
    DuplicateIntent { scope: String, intent: String },
    #[error("rule lexicon.thresholds: need 0 < low_max < medium_max, got {low_max} / {medium_max}")]
    BadThresholds { low_max: f64, medium_max: f64 },
    #[error("rule lexicon.weight: weight of {word:?} must lie in (0, 1], got {weight}")]
    BadWeight { word: String, weight: f64 },
    #[error("rule lexicon.class: {0:?} cannot carry the Neutral class")]
    NeutralEntry(String),
    #[error("rule json: cannot parse {what}: {reason}")]
    Parse { what: &'static str, reason: String },
}

impl KnowledgeBase {
    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(default)]
            objects: BTreeMap<String, Vec<Intent>>,
            #[serde(default)]
            general: Vec<Intent>,
            fallback: Option<String>,
        }
        let raw: Raw =
            serde_json::from_str(text).map_err(|e| DialogueError::Parse { what: "knowledge base", reason: e.to_string() })?;
        let kb = KnowledgeBase {
            objects: raw.objects,
            general: raw.general,
            fallback: raw.fallback.unwrap_or_default(),
        }
        .normalized();
        kb.validate()?;
        Ok(kb)
    }

    /// Lowercases object labels and keywords.
    fn normalized(mut self) -> Self {
        let lower = |intents: &mut Vec<Intent>| {
            for intent in intents.iter_mut() {
                intent.patterns = intent
                    .patterns
                    .iter()
                    .map(|p| p.iter().map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()).collect())
                    .collect();
            }
        };
        self.objects = std::mem::take(&mut self.objects)
            .into_iter()
            .map(|(label, mut intents)| {
                lower(&mut intents);
                (label.to_lowercase(), intents)
            })
            .collect();
        lower(&mut self.general);
        self
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.fallback.trim().is_empty() {
            return Err(DialogueError::MissingFallback);
        }
        let scopes = self.objects.iter().map(|(k, v)| (k.as_str(), v)).chain(std::iter::once(("general", &self.general)));
        for (scope, intents) in scopes {
            let mut seen = BTreeSet::new();
            for intent in intents {
                if intent.patterns.is_empty() || intent.patterns.iter().any(BTreeSet::is_empty) {
                    return Err(DialogueError::EmptyPatterns(intent.intent.clone()));
                }
                if intent.answer.trim().is_empty() {
                    return Err(DialogueError::EmptyAnswer(intent.intent.clone()));
                }
                if !seen.insert(intent.intent.as_str()) {
                    return Err(DialogueError::DuplicateIntent { scope: scope.to_owned(), intent: intent.intent.clone() });
                }
            }
        }
        Ok(())
    }

    pub fn has_object(&self, label: &str) -> bool {
        self.objects.contains_key(label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: Query,
    pub reply: Reply,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DialogueContext {
    pub current_object: Option<String>,
    pub turns: VecDeque<Turn>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternMatch {
    pub score: f64,
    pub pattern_index: usize,
    pub matched: usize,
}

/// Best containment score of `tokens` against `patterns`, first pattern
/// winning ties. `None` when there are no patterns.
fn best_pattern(tokens: &BTreeSet<String>, patterns: &[BTreeSet<String>]) -> Option<PatternMatch> {
    let mut best: Option<PatternMatch> = None;
    for (pattern_index, pattern) in patterns.iter().enumerate() {
        if pattern.is_empty() {
            continue;
        }
        let matched = pattern.iter().filter(|k| tokens.contains(*k)).count();
        let score = matched as f64 / pattern.len() as f64;
        if best.is_none_or(|b| score > b.score) {
            best = Some(PatternMatch { score, pattern_index, matched });
        }
    }
    best
}

/// Scores `text` against keyword sets. Only matches at or above
/// [`MATCH_THRESHOLD`] are returned.
pub fn match_intent(text: &str, patterns: &[BTreeSet<String>]) -> Option<PatternMatch> {
    let tokens: BTreeSet<String> = words(text).into_iter().collect();
    best_pattern(&tokens, patterns).filter(|m| m.score >= MATCH_THRESHOLD)
}

/// Picks the best matching intent: higher score, then more matched keywords,
/// then list order.
fn select<'a>(text: &str, intents: &'a [Intent]) -> Option<&'a Intent> {
    let mut best: Option<(PatternMatch, &Intent)> = None;
    for intent in intents {
        let Some(m) = match_intent(text, &intent.patterns) else { continue };
        let better = match &best {
            None => true,
            Some((b, _)) => m.score > b.score || (m.score == b.score && m.matched > b.matched),
        };
        if better {
            best = Some((m, intent));
        }
    }
    best.map(|(_, i)| i)
}

/// Answers a query and returns the updated context.
pub fn respond(
    query: &Query,
    context: &DialogueContext,
    kb: &KnowledgeBase,
    lexicon: &SentimentLexicon,
) -> (Reply, DialogueContext) {
    let mut next = context.clone();
    let mut answer: Option<&str> = None;

    if let Some(label) = &query.object {
        let label = label.trim().to_lowercase();
        match kb.objects.get(&label) {
            Some(intents) => {
                next.current_object = Some(label);
                answer = select(&query.text, intents).map(|i| i.answer.as_str());
            }
            None => next.current_object = None,
        }
    } else if let Some(intents) = next.current_object.as_ref().and_then(|o| kb.objects.get(o)) {
        answer = select(&query.text, intents).map(|i| i.answer.as_str());
    }

    let text = answer
        .or_else(|| select(&query.text, &kb.general).map(|i| i.answer.as_str()))
        .unwrap_or(kb.fallback.as_str())
        .to_owned();
    let (sentiment_class, sentiment_level) = classify_sentiment(&text, lexicon);
    let reply = Reply { text, sentiment_class, sentiment_level };

    next.turns.push_back(Turn { query: query.clone(), reply: reply.clone() });
    while next.turns.len() > HISTORY_CAP {
        next.turns.pop_front();
    }
    (reply, next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub class: SentimentClass,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLexicon", into = "RawLexicon")]
pub struct SentimentLexicon {
    pub entries: BTreeMap<String, (SentimentClass, f64)>,
    pub negators: BTreeSet<String>,
    pub low_max: f64,
    pub medium_max: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLexicon {
    entries: Vec<LexiconEntry>,
    #[serde(default)]
    negators: BTreeSet<String>,
    low_max: f64,
    medium_max: f64,
}

impl TryFrom<RawLexicon> for SentimentLexicon {
    type Error = DialogueError;

    fn try_from(raw: RawLexicon) -> Result<Self, Self::Error> {
        let lexicon = SentimentLexicon {
            entries: raw.entries.into_iter().map(|e| (e.word.to_lowercase(), (e.class, e.weight))).collect(),
            negators: raw.negators.into_iter().map(|w| w.to_lowercase()).collect(),
            low_max: raw.low_max,
            medium_max: raw.medium_max,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }
}

impl From<SentimentLexicon> for RawLexicon {
    fn from(l: SentimentLexicon) -> Self {
        RawLexicon {
            entries: l
                .entries
                .into_iter()
                .map(|(word, (class, weight))| LexiconEntry { word, class, weight })
                .collect(),
            negators: l.negators,
            low_max: l.low_max,
            medium_max: l.medium_max,
        }
    }
}

impl SentimentLexicon {
    pub fn new(entries: &[(&str, SentimentClass, f64)], low_max: f64, medium_max: f64) -> Result<Self, DialogueError> {
        let lexicon = SentimentLexicon {
            entries: entries.iter().map(|(w, c, x)| (w.to_lowercase(), (*c, *x))).collect(),
            negators: ["not", "no", "never"].into_iter().map(str::to_owned).collect(),
            low_max,
            medium_max,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        serde_json::from_str(text).map_err(|e| DialogueError::Parse { what: "sentiment lexicon", reason: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if !(self.low_max > 0.0 && self.low_max < self.medium_max && self.medium_max.is_finite()) {
            return Err(DialogueError::BadThresholds { low_max: self.low_max, medium_max: self.medium_max });
        }
        for (word, (class, weight)) in &self.entries {
            if *class == SentimentClass::Neutral {
                return Err(DialogueError::NeutralEntry(word.clone()));
            }
            if !(*weight > 0.0 && *weight <= 1.0) {
                return Err(DialogueError::BadWeight { word: word.clone(), weight: *weight });
            }
        }
        Ok(())
    }

    pub fn level_for(&self, score: f64) -> SentimentLevel {
        if score <= self.low_max {
            SentimentLevel::Low
        } else if score <= self.medium_max {
            SentimentLevel::Medium
        } else {
            SentimentLevel::High
        }
    }
}

/// Lexicon-sum sentiment.
///
/// Each lexicon word adds its weight to its class unless one of the two
/// preceding tokens is a negator, in which case it contributes nothing.
/// The highest-scoring class wins (Joy, Angry, Sad, Fear on ties); a text
/// with no scored words is `(Neutral, Low)`.
pub fn classify_sentiment(text: &str, lexicon: &SentimentLexicon) -> (SentimentClass, SentimentLevel) {
    let tokens = words(text);
    let mut scores = [0.0f64; 4];
    for (i, token) in tokens.iter().enumerate() {
        let Some((class, weight)) = lexicon.entries.get(token) else { continue };
        let negated = tokens[i.saturating_sub(2)..i].iter().any(|t| lexicon.negators.contains(t));
        if negated {
            continue;
        }
        if let Some(slot) = SentimentClass::EMOTIONS.iter().position(|c| c == class) {
            scores[slot] += weight;
        }
    }
    let (slot, best) = scores
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bs), (i, &s)| if s > bs { (i, s) } else { (bi, bs) });
    if best <= 0.0 {
        return (SentimentClass::Neutral, SentimentLevel::Low);
    }
    (SentimentClass::EMOTIONS[slot], lexicon.level_for(best))
}
