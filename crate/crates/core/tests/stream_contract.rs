//! The checked-in stream fixture and generated streams against the schema.

use std::fs;
use std::path::PathBuf;

use posewatch::keypoint::validate_frame;
use posewatch::stream::{frame_to_line, parse_frame_line, read_frames};
use posewatch::synthgen::{generate_sequence, ScenarioSpec};
use posewatch::Error;

fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn validator() -> jsonschema::Validator {
    let text = fs::read_to_string(repo_path("../../schema/keypoint-stream.v1.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn fixture() -> String {
    fs::read_to_string(repo_path("tests/fixtures/three_frames.jsonl")).unwrap()
}

#[test]
fn fixture_matches_schema() {
    let v = validator();
    for line in fixture().lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.is_valid(&value), "{line}");
    }
}

#[test]
fn fixture_ingests_without_issues() {
    let frames = read_frames(fixture().as_bytes()).unwrap();
    assert_eq!(frames.len(), 3);
    assert!(frames[2].persons.is_empty());
    for f in &frames {
        assert!(validate_frame(f).is_empty(), "{:?}", validate_frame(f));
    }
}

#[test]
fn fixture_round_trips_exactly() {
    for line in fixture().lines() {
        assert_eq!(frame_to_line(&parse_frame_line(line).unwrap()).unwrap(), line);
    }
}

#[test]
fn generated_frames_match_schema() {
    let v = validator();
    let stream = generate_sequence(&ScenarioSpec::crowd(4, 20, 10)).unwrap();
    for f in &stream.frames {
        let value: serde_json::Value = serde_json::from_str(&frame_to_line(f).unwrap()).unwrap();
        assert!(v.is_valid(&value));
    }
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let v = validator();
    let line = fixture().lines().next().unwrap().to_string();
    let mut extra: serde_json::Value = serde_json::from_str(&line).unwrap();
    extra["camera"] = serde_json::json!("north");
    assert!(!v.is_valid(&extra));
    assert!(parse_frame_line(&extra.to_string()).is_err());

    let mut short: serde_json::Value = serde_json::from_str(&line).unwrap();
    short["persons"][0]["keypoints"].as_array_mut().unwrap().pop();
    assert!(!v.is_valid(&short));
    assert!(parse_frame_line(&short.to_string()).is_err());
}

#[test]
fn malformed_line_reports_its_number() {
    let mut text = fixture();
    text.insert_str(text.find('\n').unwrap() + 1, "{\"frame_index\": \"x\"}\n");
    match read_frames(text.as_bytes()) {
        Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
