//! Greedy IoU identity tracking and the keypoint-velocity rule.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::keypoint::{index, BoundingBox, FeatureVector};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    /// Frames a track may go unmatched before it is dropped. `0` drops it on
    /// the first miss.
    pub grace_frames: u32,
    pub history_capacity: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.3, grace_frames: 0, history_capacity: 90 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!("iou threshold {} outside (0, 1]", self.iou_threshold)));
        }
        if self.history_capacity == 0 {
            return Err(Error::Config("history capacity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityRuleConfig {
    /// Bbox-relative units per second below which a fight call is downgraded.
    pub velocity_threshold: f64,
    pub window_frames: usize,
    pub tracked_keypoints: Vec<usize>,
}

impl Default for VelocityRuleConfig {
    fn default() -> Self {
        Self {
            velocity_threshold: 0.2,
            window_frames: 5,
            tracked_keypoints: vec![index::LEFT_WRIST, index::RIGHT_WRIST, index::LEFT_ANKLE, index::RIGHT_ANKLE],
        }
    }
}

impl VelocityRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.velocity_threshold > 0.0) {
            return Err(Error::Config("velocity threshold must be positive".into()));
        }
        if self.window_frames < 2 {
            return Err(Error::Config("velocity window needs at least 2 frames".into()));
        }
        if self.tracked_keypoints.is_empty() || self.tracked_keypoints.iter().any(|&k| k >= crate::keypoint::NUM_KEYPOINTS) {
            return Err(Error::Config("tracked keypoints must be non-empty valid indices".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureObservation {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub bbox_history: VecDeque<(u64, BoundingBox)>,
    pub feature_history: VecDeque<FeatureObservation>,
    pub label_history: VecDeque<(u64, f64)>,
    pub frames_since_seen: u32,
    capacity: usize,
}

fn push_bounded<T>(buf: &mut VecDeque<T>, item: T, capacity: usize) {
    if buf.len() == capacity {
        buf.pop_front();
    }
    buf.push_back(item);
}

impl Track {
    fn new(track_id: u64, capacity: usize) -> Self {
        Self {
            track_id,
            bbox_history: VecDeque::new(),
            feature_history: VecDeque::new(),
            label_history: VecDeque::new(),
            frames_since_seen: 0,
            capacity,
        }
    }

    pub fn last_bbox(&self) -> Option<&BoundingBox> {
        self.bbox_history.back().map(|(_, b)| b)
    }

    pub fn push_features(&mut self, frame_index: u64, timestamp_s: f64, features: FeatureVector) {
        push_bounded(&mut self.feature_history, FeatureObservation { frame_index, timestamp_s, features }, self.capacity);
    }

    pub fn push_probability(&mut self, frame_index: u64, p_fight: f64) {
        push_bounded(&mut self.label_history, (frame_index, p_fight), self.capacity);
    }

    /// The most recent `window` fight probabilities, oldest first.
    pub fn recent_probabilities(&self, window: usize) -> Vec<f64> {
        let skip = self.label_history.len().saturating_sub(window);
        self.label_history.iter().skip(skip).map(|&(_, p)| p).collect()
    }
}

/// Intersection area over union area; `0` when either box is empty.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy one-to-one matching over a `tracks × detections` overlap matrix:
/// pairs are taken in descending overlap order (ties by track, then
/// detection index) while both sides are free and the overlap is at least
/// `threshold`. Returns `(track, detection)` pairs in selection order.
pub fn greedy_match(overlaps: &[Vec<f64>], threshold: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (t, row) in overlaps.iter().enumerate() {
        for (d, &v) in row.iter().enumerate() {
            if v >= threshold {
                pairs.push((v, t, d));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_det = overlaps.first().map_or(0, Vec::len);
    let mut track_taken = vec![false; overlaps.len()];
    let mut det_taken = vec![false; n_det];
    let mut out = Vec::new();
    for (_, t, d) in pairs {
        if !track_taken[t] && !det_taken[d] {
            track_taken[t] = true;
            det_taken[d] = true;
            out.push((t, d));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub detection: usize,
    pub track_id: u64,
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackUpdate {
    /// One entry per detection, in detection order.
    pub assignments: Vec<Assignment>,
    pub removed: Vec<u64>,
}

/// Per-stream tracker state. Track ids are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, tracks: Vec::new(), next_id: 1, last_frame: None })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    pub fn track_mut(&mut self, id: u64) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.track_id == id)
    }

    /// Greedy matching in descending IoU order over pairs at or above the
    /// threshold. Unmatched detections open new tracks; unmatched tracks are
    /// dropped once they exceed the grace period.
    pub fn update(&mut self, frame_index: u64, boxes: &[BoundingBox]) -> Result<TrackUpdate> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::Stream(format!("frame {frame_index} does not follow frame {last}")));
            }
        }
        self.last_frame = Some(frame_index);

        let overlaps: Vec<Vec<f64>> = self
            .tracks
            .iter()
            .map(|track| match track.last_bbox() {
                Some(prev) => boxes.iter().map(|b| iou(prev, b)).collect(),
                None => vec![0.0; boxes.len()],
            })
            .collect();
        let mut track_taken = vec![false; self.tracks.len()];
        let mut det_track: Vec<Option<usize>> = vec![None; boxes.len()];
        for (t, d) in greedy_match(&overlaps, self.config.iou_threshold) {
            track_taken[t] = true;
            det_track[d] = Some(t);
        }

        let capacity = self.config.history_capacity;
        let mut assignments = Vec::with_capacity(boxes.len());
        for (d, b) in boxes.iter().enumerate() {
            let (track_id, is_new) = match det_track[d] {
                Some(t) => {
                    let track = &mut self.tracks[t];
                    track.frames_since_seen = 0;
                    push_bounded(&mut track.bbox_history, (frame_index, *b), capacity);
                    (track.track_id, false)
                }
                None => {
                    let mut track = Track::new(self.next_id, capacity);
                    self.next_id += 1;
                    push_bounded(&mut track.bbox_history, (frame_index, *b), capacity);
                    let id = track.track_id;
                    self.tracks.push(track);
                    (id, true)
                }
            };
            assignments.push(Assignment { detection: d, track_id, is_new });
        }

        let mut removed = Vec::new();
        let grace = self.config.grace_frames;
        let mut t = 0;
        self.tracks.retain_mut(|track| {
            let matched = t < track_taken.len() && track_taken[t];
            let is_old = t < track_taken.len();
            t += 1;
            if !is_old || matched {
                return true;
            }
            track.frames_since_seen += 1;
            if track.frames_since_seen > grace {
                removed.push(track.track_id);
                false
            } else {
                true
            }
        });
        Ok(TrackUpdate { assignments, removed })
    }
}

/// Mean displacement per second of the tracked keypoints between the oldest
/// and newest feature observations inside the window. `None` when there is
/// not enough history or no tracked keypoint is detected at both ends.
pub fn keypoint_velocity(track: &Track, rule: &VelocityRuleConfig) -> Option<f64> {
    let newest = track.feature_history.back()?;
    let horizon = newest.frame_index.saturating_sub(rule.window_frames.saturating_sub(1) as u64);
    let oldest = track.feature_history.iter().find(|o| o.frame_index >= horizon)?;
    if oldest.frame_index == newest.frame_index {
        return None;
    }
    let dt = newest.timestamp_s - oldest.timestamp_s;
    if !(dt > 0.0) {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for &k in &rule.tracked_keypoints {
        if oldest.features.is_sentinel(k) || newest.features.is_sentinel(k) {
            continue;
        }
        let (x0, y0) = oldest.features.point(k);
        let (x1, y1) = newest.features.point(k);
        total += ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        count += 1;
    }
    (count > 0).then(|| total / count as f64 / dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityHint {
    Uphold,
    Downgrade,
}

/// Slow movement during a fight call suggests an ambiguous pose rather than
/// a fight. Only fight calls (`p ≥ 0.5`) can be downgraded.
pub fn apply_velocity_rule(p_fight: f64, velocity: Option<f64>, rule: &VelocityRuleConfig) -> VelocityHint {
    match velocity {
        Some(v) if p_fight >= 0.5 && v < rule.velocity_threshold => VelocityHint::Downgrade,
        _ => VelocityHint::Uphold,
    }
}
