use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use docent_core::fixtures;
use docent_core::latency::LatencyModel;
use docent_core::sim::SimReport;
use serde_json::Value;

fn docent(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docent")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn run_report_and_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let trace = dir.path().join("trace.ndjson");
    let ran = docent(&["run", "--seed", "7", "--out", path(&report), "--trace", path(&trace)]);
    assert!(ran.status.success(), "{}", stderr(&ran));
    let table = stdout(&ran);
    for row in ["Total queries", "Object recognition", "Chatbot", "Processing time", "Total Time", "Std Dev"] {
        assert!(table.contains(row), "{table}");
    }

    let saved = SimReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!((saved.seed, saved.sessions, saved.records.len()), (7, 30, 90));
    let printed = docent(&["report", path(&report)]);
    assert!(printed.status.success());
    assert!(stdout(&printed).ends_with(table.lines().take(7).map(|l| format!("{l}\n")).collect::<String>().as_str()));

    let replayed = docent(&["replay", path(&trace)]);
    assert!(replayed.status.success(), "{}", stdout(&replayed));
    assert!(stdout(&replayed).contains(" 0 differences"));
}

#[test]
fn replay_reports_tampered_records() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.ndjson");
    assert!(docent(&["run", "--trace", path(&trace)]).status.success());
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let index = lines.iter().position(|l| l.contains("\"start_recognizer\"")).expect("a listening transition");
    let mut record: Value = serde_json::from_str(&lines[index]).unwrap();
    record["actions"] = Value::Array(Vec::new());
    lines[index] = record.to_string();
    std::fs::write(&trace, lines.join("\n")).unwrap();
    let replayed = docent(&["replay", path(&trace)]);
    assert!(!replayed.status.success());
    assert!(stdout(&replayed).contains(" 1 differences"), "{}", stdout(&replayed));
}

#[test]
fn zero_latency_model_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let latency = dir.path().join("latency.toml");
    std::fs::write(&latency, LatencyModel::zero().to_toml()).unwrap();
    let report = dir.path().join("report.json");
    let ran = docent(&["run", "--latency", path(&latency), "--out", path(&report)]);
    assert!(ran.status.success(), "{}", stderr(&ran));
    let saved = SimReport::from_json(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(saved.records.iter().all(|r| r.metrics.total_time == 0.0));
}

#[test]
fn bundled_assets_validate() {
    let dir = tempfile::tempdir().unwrap();
    let files = [
        ("kb", fixtures::KNOWLEDGE_BASE_JSON),
        ("lexicon", fixtures::SENTIMENT_LEXICON_JSON),
        ("clips", fixtures::CLIPS_JSON),
        ("mapping", fixtures::MAPPING_TABLE_JSON),
        ("phonemes", fixtures::PHONEME_LEXICON_JSON),
        ("visemes", fixtures::VISEMES_JSON),
    ];
    let scenario = fixtures::garden_scenario().to_json();
    for (kind, text) in files.iter().copied().chain([("scenario", scenario.as_str())]) {
        let file = dir.path().join(format!("{kind}.json"));
        std::fs::write(&file, text).unwrap();
        let checked = docent(&["validate", kind, path(&file)]);
        assert!(checked.status.success(), "{kind}: {}", stderr(&checked));
    }
}

fn expect_rule(kind: &str, text: &str, rule: &str) {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("input");
    std::fs::write(&file, text).unwrap();
    let checked = docent(&["validate", kind, path(&file)]);
    assert!(!checked.status.success(), "{kind} accepted");
    let message = stderr(&checked);
    assert_eq!(message.trim_end().lines().count(), 1, "{message}");
    assert!(message.contains(rule), "{message}");
}

#[test]
fn kb_without_fallback_names_the_rule() {
    let mut kb: Value = serde_json::from_str(fixtures::KNOWLEDGE_BASE_JSON).unwrap();
    kb.as_object_mut().unwrap().remove("fallback");
    expect_rule("kb", &kb.to_string(), "kb.fallback");
}

#[test]
fn broken_files_name_their_rule() {
    expect_rule("mapping", r#"{"entries": {"hi": "Nope"}, "default_clip": "Idle_Talk"}"#, "mapping.clips");
    expect_rule("lexicon", r#"{"entries": [], "negators": [], "low_max": 0.9, "medium_max": 0.4}"#, "lexicon");
    expect_rule("kb", "{ not json", "rule json");

    let mut scenario = fixtures::garden_scenario_with(1);
    scenario.scripts[0].room = "room9".into();
    expect_rule("scenario", &scenario.to_json(), "script 0");
}

#[test]
fn serve_answers_chat() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_docent"))
        .args(["serve", "--port", "0", "--recognize-time-scale", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut banner).unwrap();
    let addr = banner.trim().strip_prefix("listening on http://").expect(&banner).to_owned();

    let body = r#"{"text": "what is this", "object": "rose"}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /v1/chat HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let json: Value = serde_json::from_str(response.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert!(json["reply"].as_str().unwrap().to_lowercase().contains("rose"));
    assert!(json["sentiment_class"].is_string() && json["sentiment_level"].is_string());
}
