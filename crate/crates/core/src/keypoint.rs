//! Detection domain types and the skeleton → feature-vector normalization.
//!
//! A [`Skeleton`] is the 17 COCO keypoints of one person in one frame. The
//! classifier heads never see pixel coordinates; they consume the
//! [`FeatureVector`] produced by [`normalize_skeleton`], which expresses every
//! keypoint relative to the person's bounding box so that the result only
//! depends on the pose, not on where the person stands or how large they
//! appear.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of keypoints in a COCO skeleton.
pub const NUM_KEYPOINTS: usize = 17;

/// Length of a normalized feature vector (x and y per keypoint).
pub const FEATURE_LEN: usize = 2 * NUM_KEYPOINTS;

/// Default minimum number of detected keypoints for a person to be classified.
pub const MIN_DETECTED_KEYPOINTS: usize = 4;

/// COCO keypoint names, in skeleton order.
pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

pub mod index {
    pub const NOSE: usize = 0;
    pub const LEFT_EYE: usize = 1;
    pub const RIGHT_EYE: usize = 2;
    pub const LEFT_EAR: usize = 3;
    pub const RIGHT_EAR: usize = 4;
    pub const LEFT_SHOULDER: usize = 5;
    pub const RIGHT_SHOULDER: usize = 6;
    pub const LEFT_ELBOW: usize = 7;
    pub const RIGHT_ELBOW: usize = 8;
    pub const LEFT_WRIST: usize = 9;
    pub const RIGHT_WRIST: usize = 10;
    pub const LEFT_HIP: usize = 11;
    pub const RIGHT_HIP: usize = 12;
    pub const LEFT_KNEE: usize = 13;
    pub const RIGHT_KNEE: usize = 14;
    pub const LEFT_ANKLE: usize = 15;
    pub const RIGHT_ANKLE: usize = 16;
}

/// A single 2D keypoint in image pixels. `confidence == 0` marks an
/// undetected keypoint whose coordinates carry no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn missing() -> Self {
        Self::default()
    }

    #[inline]
    pub fn is_detected(&self) -> bool {
        self.confidence > 0.0
    }
}

/// Keypoints of one person in one frame, in COCO order.
///
/// Well-formed skeletons hold exactly [`NUM_KEYPOINTS`] entries. The length
/// is not enforced at construction so that malformed upstream records can be
/// represented and reported by [`validate_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub keypoints: Vec<Keypoint>,
}

impl Skeleton {
    pub fn new(keypoints: Vec<Keypoint>) -> Result<Self> {
        if keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::Data(format!(
                "skeleton must have {NUM_KEYPOINTS} keypoints, got {}",
                keypoints.len()
            )));
        }
        Ok(Self { keypoints })
    }

    /// Builds a skeleton from the flat `[x, y, confidence] × 17` wire layout.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() % 3 != 0 {
            return Err(Error::Data(format!(
                "flat keypoint sequence length {} is not a multiple of 3",
                values.len()
            )));
        }
        let keypoints = values
            .chunks_exact(3)
            .map(|c| Keypoint::new(c[0], c[1], c[2]))
            .collect();
        Ok(Self { keypoints })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.keypoints
            .iter()
            .flat_map(|k| [k.x, k.y, k.confidence])
            .collect()
    }

    pub fn detected_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_detected()).count()
    }

    /// Whether enough keypoints are detected to carry pose shape.
    pub fn is_classifiable(&self, min_detected: usize) -> bool {
        self.keypoints.len() == NUM_KEYPOINTS && self.detected_count() >= min_detected
    }

    /// Applies `p ↦ scale·p + (dx, dy)` to every keypoint.
    pub fn transformed(&self, scale: f64, dx: f64, dy: f64) -> Self {
        let keypoints = self
            .keypoints
            .iter()
            .map(|k| Keypoint::new(scale * k.x + dx, scale * k.y + dy, k.confidence))
            .collect();
        Self { keypoints }
    }
}

/// Axis-aligned box in pixels. Serialized as `{x, y, w, h}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    #[serde(rename = "x")]
    pub x_min: f64,
    #[serde(rename = "y")]
    pub y_min: f64,
    #[serde(rename = "w")]
    pub width: f64,
    #[serde(rename = "h")]
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, width: f64, height: f64) -> Self {
        Self { x_min, y_min, width, height }
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.width
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.width > 0.0 && self.height > 0.0)
            || !self.x_min.is_finite()
            || !self.y_min.is_finite()
            || !self.width.is_finite()
            || !self.height.is_finite()
    }

    /// Grows the box by `fraction` of its own extent on every side.
    pub fn expanded(&self, fraction: f64) -> Self {
        let dx = self.width * fraction;
        let dy = self.height * fraction;
        Self::new(
            self.x_min - dx,
            self.y_min - dy,
            self.width + 2.0 * dx,
            self.height + 2.0 * dy,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max() && y >= self.y_min && y <= self.y_max()
    }

    pub fn transformed(&self, scale: f64, dx: f64, dy: f64) -> Self {
        Self::new(
            scale * self.x_min + dx,
            scale * self.y_min + dy,
            scale * self.width,
            scale * self.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonDetection {
    pub bbox: BoundingBox,
    pub skeleton: Skeleton,
    pub detection_score: f64,
}

/// All person detections for one frame of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub persons: Vec<PersonDetection>,
}

/// Bounding-box relative skeleton coordinates, laid out as
/// `[x0, y0, x1, y1, …, x16, y16]`, every value in `[0, 1]`.
#[derive(Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_LEN]);

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_LEN]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("feature value {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; FEATURE_LEN] = values.try_into().map_err(|_| Error::DimensionMismatch {
            expected: FEATURE_LEN,
            got: values.len(),
        })?;
        Self::new(arr)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Normalized `(x, y)` of keypoint `i`.
    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.0[2 * i], self.0[2 * i + 1])
    }

    /// Whether keypoint `i` carries the undetected sentinel `(0, 0)`.
    pub fn is_sentinel(&self, i: usize) -> bool {
        self.point(i) == (0.0, 0.0)
    }
}

impl fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FeatureVector").field(&&self.0[..]).finish()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Maps a skeleton into bbox-relative coordinates clamped to `[0, 1]`.
/// Undetected keypoints become `(0, 0)`.
pub fn normalize_skeleton(skeleton: &Skeleton, bbox: &BoundingBox) -> Result<FeatureVector> {
    if bbox.is_degenerate() {
        return Err(Error::Normalization(format!(
            "degenerate bounding box {}x{}",
            bbox.width, bbox.height
        )));
    }
    if skeleton.keypoints.len() != NUM_KEYPOINTS {
        return Err(Error::Normalization(format!(
            "skeleton has {} keypoints, expected {NUM_KEYPOINTS}",
            skeleton.keypoints.len()
        )));
    }
    let mut values = [0.0; FEATURE_LEN];
    for (i, kp) in skeleton.keypoints.iter().enumerate() {
        if !kp.is_detected() {
            continue;
        }
        values[2 * i] = ((kp.x - bbox.x_min) / bbox.width).clamp(0.0, 1.0);
        values[2 * i + 1] = ((kp.y - bbox.y_min) / bbox.height).clamp(0.0, 1.0);
    }
    Ok(FeatureVector(values))
}

/// Tight box over the detected keypoints, grown by `margin_fraction` of its
/// extent on each side.
pub fn bbox_from_skeleton(skeleton: &Skeleton, margin_fraction: f64) -> Result<BoundingBox> {
    let detected: Vec<&Keypoint> = skeleton.keypoints.iter().filter(|k| k.is_detected()).collect();
    if detected.len() < 2 {
        return Err(Error::InsufficientKeypoints { required: 2, found: detected.len() });
    }
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in detected {
        x0 = x0.min(k.x);
        y0 = y0.min(k.y);
        x1 = x1.max(k.x);
        y1 = y1.max(k.y);
    }
    Ok(BoundingBox::new(x0, y0, x1 - x0, y1 - y0).expanded(margin_fraction))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    WrongKeypointCount { found: usize },
    ConfidenceOutOfRange { keypoint: usize, value: f64 },
    NonFiniteCoordinate { keypoint: usize },
    DegenerateBbox { width: f64, height: f64 },
    DetectionScoreOutOfRange { value: f64 },
    KeypointOutsideBox { keypoint: usize },
    InvalidImageSize,
    NonFiniteTimestamp,
}

/// One invariant violation found by [`validate_frame`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    /// Index into `frame.persons`, or `None` for frame-level issues.
    pub person: Option<usize>,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: IssueKind,
}

/// Reports every invariant violation in a frame without modifying it.
/// Keypoints outside the 10%-expanded box are soft warnings.
pub fn validate_frame(frame: &FrameDetections) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let frame_issue = |kind| ValidationIssue { person: None, severity: Severity::Error, kind };
    if frame.image_width == 0 || frame.image_height == 0 {
        issues.push(frame_issue(IssueKind::InvalidImageSize));
    }
    if !frame.timestamp_s.is_finite() {
        issues.push(frame_issue(IssueKind::NonFiniteTimestamp));
    }

    for (p, person) in frame.persons.iter().enumerate() {
        let mut push = |severity, kind| issues.push(ValidationIssue { person: Some(p), severity, kind });
        let kps = &person.skeleton.keypoints;
        if kps.len() != NUM_KEYPOINTS {
            push(Severity::Error, IssueKind::WrongKeypointCount { found: kps.len() });
        }
        let bbox_ok = !person.bbox.is_degenerate();
        if !bbox_ok {
            push(
                Severity::Error,
                IssueKind::DegenerateBbox { width: person.bbox.width, height: person.bbox.height },
            );
        }
        if !(0.0..=1.0).contains(&person.detection_score) {
            push(Severity::Error, IssueKind::DetectionScoreOutOfRange { value: person.detection_score });
        }
        let soft_box = person.bbox.expanded(0.1);
        for (i, kp) in kps.iter().enumerate() {
            if !(0.0..=1.0).contains(&kp.confidence) {
                push(Severity::Error, IssueKind::ConfidenceOutOfRange { keypoint: i, value: kp.confidence });
            }
            if !kp.x.is_finite() || !kp.y.is_finite() {
                push(Severity::Error, IssueKind::NonFiniteCoordinate { keypoint: i });
            } else if bbox_ok && kp.is_detected() && !soft_box.contains(kp.x, kp.y) {
                push(Severity::Warning, IssueKind::KeypointOutsideBox { keypoint: i });
            }
        }
    }
    issues
}
