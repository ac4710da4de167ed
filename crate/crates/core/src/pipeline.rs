//! Frame-by-frame stream inference.
//!
//! Per person and frame: normalize the skeleton, score it with the
//! classifier, associate it with a track, average the track's recent fight
//! probabilities, classify the average into Normal / Warning / Fight, and
//! downgrade Fight to Warning when the tracked limbs move slowly. The limb
//! speed is averaged over the same window as the probability. Alert events
//! are emitted only when a track's state changes.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, Write};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::keypoint::{
    bbox_from_skeleton, normalize_skeleton, BoundingBox, FeatureVector, FrameDetections, MIN_DETECTED_KEYPOINTS,
};
use crate::stream::parse_frame_line;
use crate::tracking::{apply_velocity_rule, keypoint_velocity, Tracker, TrackerConfig, VelocityHint, VelocityRuleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertState {
    Normal,
    Warning,
    Fight,
}

/// What the pipeline reports for one person in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonStatus {
    Normal,
    Warning,
    Fight,
    /// Too few detected keypoints to classify this frame.
    Skipped,
}

impl From<AlertState> for PersonStatus {
    fn from(s: AlertState) -> Self {
        match s {
            AlertState::Normal => PersonStatus::Normal,
            AlertState::Warning => PersonStatus::Warning,
            AlertState::Fight => PersonStatus::Fight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t_warn: f64,
    pub t_alert: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { t_warn: 0.5, t_alert: 0.8 }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_warn && self.t_warn < self.t_alert && self.t_alert <= 1.0) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < t_warn < t_alert <= 1, got {} and {}",
                self.t_warn, self.t_alert
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub thresholds: Thresholds,
    pub smoothing_window: usize,
    /// A track only leaves a state once its smoothed probability is this far
    /// below the state's threshold. `0` disables hysteresis.
    pub hysteresis: f64,
    pub tracker: TrackerConfig,
    pub velocity_rule: Option<VelocityRuleConfig>,
    pub expected_fps: f64,
    pub min_detected_keypoints: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            smoothing_window: 15,
            hysteresis: 0.05,
            tracker: TrackerConfig::default(),
            velocity_rule: Some(VelocityRuleConfig::default()),
            expected_fps: 30.0,
            min_detected_keypoints: MIN_DETECTED_KEYPOINTS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.tracker.validate()?;
        if let Some(rule) = &self.velocity_rule {
            rule.validate()?;
        }
        if self.smoothing_window == 0 {
            return Err(Error::Config("smoothing window must be positive".into()));
        }
        if !(0.0..self.thresholds.t_warn).contains(&self.hysteresis) {
            return Err(Error::Config(format!("hysteresis {} outside [0, t_warn)", self.hysteresis)));
        }
        if !(self.expected_fps > 0.0) {
            return Err(Error::Config("expected fps must be positive".into()));
        }
        Ok(())
    }
}

/// `p < t_warn` → Normal, `t_warn ≤ p < t_alert` → Warning, otherwise Fight.
pub fn classify_state(p_fight: f64, thresholds: &Thresholds) -> AlertState {
    if p_fight >= thresholds.t_alert {
        AlertState::Fight
    } else if p_fight >= thresholds.t_warn {
        AlertState::Warning
    } else {
        AlertState::Normal
    }
}

/// Threshold classification with downward hysteresis: moving up is
/// immediate, moving down only goes as far as `p + hysteresis` allows.
pub fn next_state(previous: AlertState, p_fight: f64, thresholds: &Thresholds, hysteresis: f64) -> AlertState {
    let raw = classify_state(p_fight, thresholds);
    if raw >= previous {
        raw
    } else {
        raw.max(previous.min(classify_state(p_fight + hysteresis, thresholds)))
    }
}

/// Arithmetic mean of the window.
pub fn smooth_probability(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::Data("empty smoothing window".into()));
    }
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonState {
    /// `None` when no usable box could be formed for the detection.
    pub track_id: Option<u64>,
    #[serde(rename = "p_fight")]
    pub raw_p_fight: Option<f64>,
    #[serde(rename = "p_smoothed")]
    pub smoothed_p_fight: Option<f64>,
    pub state: PersonStatus,
    /// Tracked-keypoint speed averaged over the smoothing window.
    pub velocity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlertEvent {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub track_id: u64,
    pub from: AlertState,
    pub to: AlertState,
    pub p_fight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutput {
    /// One entry per input detection, in input order.
    pub persons: Vec<PersonState>,
    pub events: Vec<AlertEvent>,
}

/// Inference state for one stream. Not shareable between streams.
pub struct Pipeline {
    config: PipelineConfig,
    classifier: Arc<dyn Classifier>,
    tracker: Tracker,
    states: HashMap<u64, AlertState>,
    velocities: HashMap<u64, VecDeque<f64>>,
    last_frame: Option<(u64, f64)>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, classifier: Arc<dyn Classifier>) -> Result<Self> {
        config.validate()?;
        if classifier.input_dim() != crate::keypoint::FEATURE_LEN {
            return Err(Error::Config(format!(
                "classifier expects {} features, pipeline produces {}",
                classifier.input_dim(),
                crate::keypoint::FEATURE_LEN
            )));
        }
        let tracker = Tracker::new(config.tracker.clone())?;
        Ok(Self { config, classifier, tracker, states: HashMap::new(), velocities: HashMap::new(), last_frame: None })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn process_frame(&mut self, frame: &FrameDetections) -> Result<FrameOutput> {
        if let Some((last_index, last_ts)) = self.last_frame {
            if frame.frame_index <= last_index {
                return Err(Error::Stream(format!(
                    "frame {} arrived after frame {last_index}",
                    frame.frame_index
                )));
            }
            if frame.timestamp_s < last_ts {
                return Err(Error::Stream(format!("timestamp went backwards at frame {}", frame.frame_index)));
            }
        }
        self.last_frame = Some((frame.frame_index, frame.timestamp_s));

        // Usable boxes and features per detection.
        let mut boxes: Vec<Option<BoundingBox>> = Vec::with_capacity(frame.persons.len());
        let mut features: Vec<Option<FeatureVector>> = Vec::with_capacity(frame.persons.len());
        for person in &frame.persons {
            let bbox = if person.bbox.is_degenerate() {
                bbox_from_skeleton(&person.skeleton, 0.1).ok().filter(|b| !b.is_degenerate())
            } else {
                Some(person.bbox)
            };
            let feats = match bbox {
                Some(b) if person.skeleton.is_classifiable(self.config.min_detected_keypoints) => {
                    normalize_skeleton(&person.skeleton, &b).ok()
                }
                _ => None,
            };
            boxes.push(bbox);
            features.push(feats);
        }

        let batch: Vec<&[f64]> = features.iter().flatten().map(FeatureVector::as_slice).collect();
        let mut probabilities = self.classifier.predict_batch(&batch)?.into_iter();

        let tracked: Vec<usize> = (0..boxes.len()).filter(|&i| boxes[i].is_some()).collect();
        let tracked_boxes: Vec<BoundingBox> = tracked.iter().map(|&i| boxes[i].expect("filtered")).collect();
        let update = self.tracker.update(frame.frame_index, &tracked_boxes)?;
        for id in &update.removed {
            self.states.remove(id);
            self.velocities.remove(id);
        }
        let mut track_of = vec![None; boxes.len()];
        for a in &update.assignments {
            track_of[tracked[a.detection]] = Some(a.track_id);
        }

        let mut output = FrameOutput::default();
        for (i, feats) in features.into_iter().enumerate() {
            let track_id = track_of[i];
            let Some(feats) = feats else {
                output.persons.push(PersonState {
                    track_id,
                    raw_p_fight: None,
                    smoothed_p_fight: None,
                    state: PersonStatus::Skipped,
                    velocity: None,
                });
                continue;
            };
            let p = probabilities.next().expect("one probability per feature vector");
            let track_id = track_id.expect("classifiable detections always have a box");
            let track = self.tracker.track_mut(track_id).expect("assigned track exists");
            track.push_features(frame.frame_index, frame.timestamp_s, feats);
            track.push_probability(frame.frame_index, p);
            let smoothed = smooth_probability(&track.recent_probabilities(self.config.smoothing_window))?;
            let velocity = self.config.velocity_rule.as_ref().and_then(|rule| keypoint_velocity(track, rule));
            let velocity = velocity.map(|v| {
                let recent = self.velocities.entry(track_id).or_default();
                if recent.len() == self.config.smoothing_window {
                    recent.pop_front();
                }
                recent.push_back(v);
                recent.iter().sum::<f64>() / recent.len() as f64
            });

            let previous = self.states.get(&track_id).copied().unwrap_or(AlertState::Normal);
            let mut state = next_state(previous, smoothed, &self.config.thresholds, self.config.hysteresis);
            if state == AlertState::Fight {
                if let Some(rule) = &self.config.velocity_rule {
                    if apply_velocity_rule(smoothed, velocity, rule) == VelocityHint::Downgrade {
                        state = AlertState::Warning;
                    }
                }
            }
            if state != previous {
                output.events.push(AlertEvent {
                    frame_index: frame.frame_index,
                    timestamp_s: frame.timestamp_s,
                    track_id,
                    from: previous,
                    to: state,
                    p_fight: smoothed,
                });
            }
            self.states.insert(track_id, state);
            output.persons.push(PersonState {
                track_id: Some(track_id),
                raw_p_fight: Some(p),
                smoothed_p_fight: Some(smoothed),
                state: state.into(),
                velocity,
            });
        }
        Ok(output)
    }
}

#[derive(Debug, Serialize)]
struct AnnotatedPerson<'a> {
    bbox: BoundingBox,
    keypoints: Vec<f64>,
    detection_score: f64,
    #[serde(flatten)]
    state: &'a PersonState,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum OutputRecord<'a> {
    Frame {
        frame_index: u64,
        timestamp_s: f64,
        image_width: u32,
        image_height: u32,
        persons: Vec<AnnotatedPerson<'a>>,
    },
    Event(&'a AlertEvent),
}

/// Writes one `frame` record followed by its `event` records.
pub fn write_annotated<W: Write>(out: &mut W, frame: &FrameDetections, result: &FrameOutput) -> Result<()> {
    let persons = frame
        .persons
        .iter()
        .zip(&result.persons)
        .map(|(p, s)| AnnotatedPerson {
            bbox: p.bbox,
            keypoints: p.skeleton.to_flat(),
            detection_score: p.detection_score,
            state: s,
        })
        .collect();
    let record = OutputRecord::Frame {
        frame_index: frame.frame_index,
        timestamp_s: frame.timestamp_s,
        image_width: frame.image_width,
        image_height: frame.image_height,
        persons,
    };
    serde_json::to_writer(&mut *out, &record)?;
    out.write_all(b"\n")?;
    for event in &result.events {
        serde_json::to_writer(&mut *out, &OutputRecord::Event(event))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StreamSummary {
    pub frames_processed: usize,
    pub frames_skipped: usize,
    pub events_emitted: usize,
    pub fight_events: usize,
    pub elapsed_s: f64,
    pub throughput_fps: f64,
    /// Diagnostics for skipped lines, `line N: reason`.
    pub diagnostics: Vec<String>,
}

/// Runs every line of `input` through the pipeline and writes annotated
/// records to `output`. Malformed or out-of-order lines are skipped with a
/// diagnostic unless `strict`, which aborts with the line number.
pub fn run_stream<R: BufRead, W: Write>(
    input: R,
    pipeline: &mut Pipeline,
    mut output: W,
    strict: bool,
) -> Result<StreamSummary> {
    let start = Instant::now();
    let mut summary = StreamSummary::default();
    for (n, line) in input.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let result = parse_frame_line(&line).and_then(|frame| {
            let out = pipeline.process_frame(&frame)?;
            Ok((frame, out))
        });
        match result {
            Ok((frame, out)) => {
                write_annotated(&mut output, &frame, &out)?;
                summary.frames_processed += 1;
                summary.events_emitted += out.events.len();
                summary.fight_events += out.events.iter().filter(|e| e.to == AlertState::Fight).count();
            }
            Err(e @ (Error::Json(_) | Error::Data(_) | Error::Stream(_) | Error::Normalization(_))) => {
                if strict {
                    return Err(Error::MalformedLine { line: line_no, message: e.to_string() });
                }
                summary.frames_skipped += 1;
                summary.diagnostics.push(format!("line {line_no}: {e}"));
            }
            Err(e) => return Err(e),
        }
    }
    output.flush()?;
    summary.elapsed_s = start.elapsed().as_secs_f64();
    summary.throughput_fps = if summary.elapsed_s > 0.0 {
        summary.frames_processed as f64 / summary.elapsed_s
    } else {
        0.0
    };
    Ok(summary)
}
