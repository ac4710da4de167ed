//! Line-delimited JSON keypoint stream: one [`FrameDetections`] per line.
//!
//! The schema lives in `schema/keypoint-stream.v1.json` at the repository
//! root. Keypoints travel as a flat `[x, y, confidence] × 17` array.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keypoint::{BoundingBox, FrameDetections, PersonDetection, Skeleton};

pub const SCHEMA_VERSION: &str = "keypoint-stream/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonRecord {
    pub bbox: BoundingBox,
    pub keypoints: Vec<f64>,
    pub detection_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub persons: Vec<PersonRecord>,
}

impl From<&PersonDetection> for PersonRecord {
    fn from(p: &PersonDetection) -> Self {
        Self {
            bbox: p.bbox,
            keypoints: p.skeleton.to_flat(),
            detection_score: p.detection_score,
        }
    }
}

impl From<&FrameDetections> for FrameRecord {
    fn from(f: &FrameDetections) -> Self {
        Self {
            frame_index: f.frame_index,
            timestamp_s: f.timestamp_s,
            image_width: f.image_width,
            image_height: f.image_height,
            persons: f.persons.iter().map(PersonRecord::from).collect(),
        }
    }
}

impl TryFrom<FrameRecord> for FrameDetections {
    type Error = Error;

    fn try_from(r: FrameRecord) -> Result<Self> {
        let persons = r
            .persons
            .into_iter()
            .map(|p| {
                Ok(PersonDetection {
                    bbox: p.bbox,
                    skeleton: Skeleton::from_flat(&p.keypoints)?,
                    detection_score: p.detection_score,
                })
            })
            .collect::<Result<_>>()?;
        Ok(FrameDetections {
            frame_index: r.frame_index,
            timestamp_s: r.timestamp_s,
            image_width: r.image_width,
            image_height: r.image_height,
            persons,
        })
    }
}

pub fn parse_frame_line(line: &str) -> Result<FrameDetections> {
    let record: FrameRecord = serde_json::from_str(line)?;
    record.try_into()
}

pub fn frame_to_line(frame: &FrameDetections) -> Result<String> {
    Ok(serde_json::to_string(&FrameRecord::from(frame))?)
}

pub fn write_frames<W: Write>(mut out: W, frames: &[FrameDetections]) -> Result<()> {
    for f in frames {
        writeln!(out, "{}", frame_to_line(f)?)?;
    }
    Ok(())
}

/// Reads every frame, failing on the first malformed line.
pub fn read_frames<R: BufRead>(input: R) -> Result<Vec<FrameDetections>> {
    let mut frames = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame = parse_frame_line(&line)
            .map_err(|e| Error::MalformedLine { line: n + 1, message: e.to_string() })?;
        frames.push(frame);
    }
    Ok(frames)
}
