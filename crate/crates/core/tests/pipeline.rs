use std::sync::{Arc, OnceLock};

use posewatch::classifier::Classifier;
use posewatch::dataset::{stratified_split, SplitSpec};
use posewatch::pipeline::{run_stream, AlertState, Pipeline, PipelineConfig, PersonStatus};
use posewatch::stream::write_frames;
use posewatch::svm::{train_svm, SvmConfig, SvmModel};
use posewatch::synthgen::{generate_dataset, generate_sequence, ScenarioSpec};
use posewatch::Error;

fn svm() -> Arc<SvmModel> {
    static MODEL: OnceLock<Arc<SvmModel>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            let data = generate_dataset(452, 218, 42).unwrap();
            let split = stratified_split(&data, &SplitSpec::eighty_ten_ten(42)).unwrap();
            Arc::new(train_svm(&split.train, &SvmConfig::default()).unwrap())
        })
        .clone()
}

fn pipeline() -> Pipeline {
    let model: Arc<dyn Classifier> = svm();
    Pipeline::new(PipelineConfig::default(), model).unwrap()
}

fn stream_text(spec: &ScenarioSpec) -> Vec<u8> {
    let stream = generate_sequence(spec).unwrap();
    let mut buf = Vec::new();
    write_frames(&mut buf, &stream.frames).unwrap();
    buf
}

#[test]
fn stationary_walker_never_alerts() {
    let stream = generate_sequence(&ScenarioSpec::stationary_walk(3, 300)).unwrap();
    let mut p = pipeline();
    for frame in &stream.frames {
        let out = p.process_frame(frame).unwrap();
        assert!(out.events.is_empty(), "frame {}: {:?}", frame.frame_index, out.events);
        assert!(out.persons.iter().all(|s| s.state == PersonStatus::Normal));
    }
}

#[test]
fn fighter_alerts_and_bystander_does_not() {
    let stream = generate_sequence(&ScenarioSpec::fight_with_bystander(7, 300)).unwrap();
    let mut p = pipeline();
    let mut fighter_alerts = 0;
    let mut bystander_alerts = 0;
    for frame in &stream.frames {
        for event in p.process_frame(frame).unwrap().events {
            if event.to == AlertState::Fight {
                match event.track_id {
                    1 => fighter_alerts += 1,
                    _ => bystander_alerts += 1,
                }
            }
        }
    }
    assert!(fighter_alerts >= 1);
    assert_eq!(bystander_alerts, 0);
}

#[test]
fn malformed_lines_are_skipped_unless_strict() {
    let mut text = stream_text(&ScenarioSpec::single_walker(1, 5));
    let good_lines = text.iter().filter(|&&b| b == b'\n').count();
    text.extend_from_slice(b"{\"frame_index\": \n");

    let summary = run_stream(&text[..], &mut pipeline(), std::io::sink(), false).unwrap();
    assert_eq!(summary.frames_processed, good_lines);
    assert_eq!(summary.frames_skipped, 1);
    assert!(summary.diagnostics[0].starts_with(&format!("line {}:", good_lines + 1)));

    match run_stream(&text[..], &mut pipeline(), std::io::sink(), true) {
        Err(Error::MalformedLine { line, .. }) => assert_eq!(line, good_lines + 1),
        other => panic!("expected a malformed-line error, got {other:?}"),
    }
}

#[test]
fn out_of_order_frames_are_rejected() {
    let stream = generate_sequence(&ScenarioSpec::single_walker(1, 3)).unwrap();
    let mut p = pipeline();
    p.process_frame(&stream.frames[0]).unwrap();
    p.process_frame(&stream.frames[2]).unwrap();
    assert!(matches!(p.process_frame(&stream.frames[1]), Err(Error::Stream(_))));
    assert!(matches!(p.process_frame(&stream.frames[2]), Err(Error::Stream(_))));
}

#[test]
fn annotated_output_is_deterministic() {
    let text = stream_text(&ScenarioSpec::fight_with_bystander(11, 120));
    let run = || {
        let mut out = Vec::new();
        run_stream(&text[..], &mut pipeline(), &mut out, true).unwrap();
        out
    };
    let first = run();
    assert!(!first.is_empty());
    assert_eq!(first, run());
}

#[test]
fn annotated_records_carry_state_fields() {
    let text = stream_text(&ScenarioSpec::two_walkers(2, 10));
    let mut out = Vec::new();
    run_stream(&text[..], &mut pipeline(), &mut out, true).unwrap();
    let first: serde_json::Value = serde_json::from_str(std::str::from_utf8(&out).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["type"], "frame");
    let person = &first["persons"][0];
    for key in ["track_id", "p_fight", "p_smoothed", "state", "bbox", "keypoints"] {
        assert!(person.get(key).is_some(), "missing {key} in {person}");
    }
}
