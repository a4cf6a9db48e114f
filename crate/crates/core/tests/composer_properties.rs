mod common;

use common::*;
use docent_core::composer::{assemble, build_body_sequence, MappingTable};
use docent_core::dialogue::{Reply, SentimentClass, SentimentLevel};
use docent_core::fixtures::performance_assets;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn body_sequence_matches_maximal_munch_oracle(table in random_table(), text in random_text()) {
        prop_assert_eq!(build_body_sequence(&text, &table), maximal_munch_oracle(&text, &table));
    }

    #[test]
    fn assembled_timelines_hold_their_invariants(reply in random_reply()) {
        let violations = timeline_violations(&reply, &performance_assets());
        prop_assert!(violations.is_empty(), "{violations:?}");
    }
}

#[test]
fn oracle_agrees_on_hand_examples() {
    let table = MappingTable::new([("let", "A"), ("let me think", "B")], "Default");
    assert_eq!(maximal_munch_oracle("let me think", &table), ["B"]);
    assert_eq!(maximal_munch_oracle("let me", &table), ["A", "Default"]);
    let table = MappingTable::new([("hello", "Wave"), ("let me think", "Thinking")], "Idle_Talk");
    assert_eq!(maximal_munch_oracle("Hello, let me think.", &table), ["Wave", "Thinking"]);
    assert!(maximal_munch_oracle("", &table).is_empty());
}

#[test]
fn fixture_example_reply() {
    let assets = performance_assets();
    let reply = Reply {
        text: "Hello, let me think.".into(),
        sentiment_class: SentimentClass::Joy,
        sentiment_level: SentimentLevel::Medium,
    };
    let timeline = assemble(&reply, &assets).unwrap();
    let clips: Vec<_> = timeline.body_track.iter().map(|c| c.clip.as_str()).collect();
    assert_eq!(clips, ["Wave", "Thinking"]);
    // 4 words at 150 wpm.
    assert!((timeline.total_duration - 1.6).abs() < 1e-12);
    // hello(4) let(3) me(2) think(4) from the bundled lexicon.
    assert_eq!(timeline.viseme_track.len(), 13);
    assert_eq!(timeline.face_track[0].end, timeline.total_duration);
}

#[test]
fn unmatched_reply_gets_the_default_clip_for_its_whole_duration() {
    let assets = performance_assets();
    let timeline = assemble(&Reply::neutral("zq"), &assets).unwrap();
    assert_eq!(timeline.body_track.len(), 1);
    assert_eq!(timeline.body_track[0].clip, assets.table.default_clip);
    assert_eq!((timeline.body_track[0].start, timeline.body_track[0].end), (0.0, timeline.total_duration));
    let phonemes: Vec<_> = timeline.viseme_track.iter().map(|v| v.phoneme.as_str()).collect();
    assert_eq!(phonemes, ["Z", "K"]);
}
