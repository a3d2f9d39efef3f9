//! The whole calibration run over a synchronized session, and its file format.

use std::ops::Range;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::shape::{calibrate_shape, pinch_captures, ShapeOptions, ShapeResult};
use super::{
    reconstruct_pose, solve_alignment, solve_dorsal_alignment, virtual_references, CalibrationError,
    CalibrationResult, DorsalAlignment, DorsalPair, ReferenceCapture,
};
use crate::acquisition::{FrameSet, SegmentMarker};
use crate::glove_sim::SegmentKind;
use crate::hand_model::{HandModel, PoseParams, ShapeParams};
use crate::so3::{mean_rotation, Rotation3};

pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

/// Frames of one tagged segment, after trimming its edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpan {
    pub kind: SegmentKind,
    pub start_ns: u64,
    pub end_ns: u64,
    pub frames: Range<usize>,
}

/// Cuts the frame stream at the markers. Each segment runs to the next
/// marker, the last one to the end of the stream; `trim_ns` is dropped at
/// both ends to stay clear of the transitions. Frames must be in timestamp
/// order.
pub fn split_segments(frames: &[FrameSet], markers: &[SegmentMarker], trim_ns: u64) -> Vec<SegmentSpan> {
    let mut sorted = markers.to_vec();
    sorted.sort_by_key(|m| m.start_ns);
    let index_of = |t: u64| frames.partition_point(|f| f.timestamp_ns < t);
    let stream_end = frames.last().map_or(0, |f| f.timestamp_ns + 1);
    sorted
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let start_ns = m.start_ns.saturating_add(trim_ns);
            let end_ns = sorted.get(k + 1).map_or(stream_end, |n| n.start_ns).saturating_sub(trim_ns);
            let (a, b) = (index_of(start_ns), index_of(end_ns));
            SegmentSpan { kind: m.kind, start_ns, end_ns, frames: a..b.max(a) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Trimmed from each end of every segment.
    pub trim_ns: u64,
    /// Skip the shape stage even when pinches were recorded.
    pub skip_shape: bool,
    pub initial_shape: Option<ShapeParams>,
    pub shape: ShapeOptions,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { trim_ns: 20_000_000, skip_shape: false, initial_shape: None, shape: ShapeOptions::default() }
    }
}

/// Everything a session calibration produces, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCalibration {
    pub schema_version: u32,
    /// Content hash of the model the calibration belongs to.
    pub model_hash: String,
    pub alignment: CalibrationResult,
    pub captures: Vec<ReferenceCapture>,
    pub shape: Option<ShapeResult>,
    pub dorsal: Option<DorsalAlignment>,
    pub notices: Vec<String>,
}

impl SessionCalibration {
    /// Fitted shape, or zero when the shape stage was skipped.
    pub fn beta(&self, model: &HandModel) -> ShapeParams {
        self.shape.as_ref().map_or_else(|| model.zero_shape(), |s| s.beta.clone())
    }
}

fn in_segment<T>(kind: SegmentKind, r: Result<T, CalibrationError>) -> Result<T, CalibrationError> {
    r.map_err(|e| CalibrationError::Segment { kind: kind.name(), source: Box::new(e) })
}

/// Mean tracker pose over a segment, if the tracker saw it at all.
fn mean_dorsal(frames: &[FrameSet]) -> Result<Option<(Rotation3, Vector3<f64>)>, CalibrationError> {
    let samples: Vec<_> = frames.iter().filter_map(|f| f.dorsal).collect();
    if samples.is_empty() {
        return Ok(None);
    }
    let rotations: Vec<Rotation3> = samples.iter().map(|s| s.rotation).collect();
    let translation = samples.iter().map(|s| s.translation).sum::<Vector3<f64>>() / samples.len() as f64;
    Ok(Some((mean_rotation(&rotations)?, translation)))
}

/// Reference poses, then pinches, then the tracker. The first segment of
/// each kind is used; later repeats are ignored.
pub fn calibrate_session(
    model: &HandModel,
    frames: &[FrameSet],
    markers: &[SegmentMarker],
    options: &CalibrationOptions,
) -> Result<SessionCalibration, CalibrationError> {
    let mut spans: Vec<SegmentSpan> = Vec::new();
    for span in split_segments(frames, markers, options.trim_ns) {
        let wanted = span.kind.is_alignment_reference() || matches!(span.kind, SegmentKind::Pinch(_));
        if wanted && spans.iter().all(|s| s.kind != span.kind) {
            spans.push(span);
        }
    }
    let mut captures = Vec::with_capacity(spans.len());
    for span in &spans {
        captures.push(in_segment(span.kind, ReferenceCapture::from_frames(span.kind, &frames[span.frames.clone()]))?);
    }

    let references = virtual_references(model);
    let reference_captures: Vec<ReferenceCapture> =
        captures.iter().filter(|c| c.kind.is_alignment_reference()).cloned().collect();
    let alignment = solve_alignment(&reference_captures, &references)?;
    let mut notices = Vec::new();
    if !alignment.converged {
        notices.push(format!("alignment did not converge in {} iterations", alignment.iterations));
    }

    let pinches: Vec<ReferenceCapture> =
        captures.iter().filter(|c| matches!(c.kind, SegmentKind::Pinch(_))).cloned().collect();
    let shape = if options.skip_shape {
        notices.push("shape skipped: disabled".into());
        None
    } else if pinches.is_empty() {
        notices.push("shape skipped: no pinch segments".into());
        None
    } else {
        let poses = pinch_captures(model, &alignment, &pinches)?;
        let beta0 = options.initial_shape.clone().unwrap_or_else(|| model.zero_shape());
        let result = calibrate_shape(model, &poses, &beta0, &options.shape)?;
        if !result.converged {
            notices.push(format!("shape fit stopped after {} iterations without converging", result.iterations));
        }
        Some(result)
    };

    let mut pairs = Vec::new();
    for span in spans.iter().filter(|s| s.kind.is_alignment_reference()) {
        let Some(reference) = references.iter().find(|r| r.kind == span.kind) else { continue };
        if let Some((rotation, translation)) = in_segment(span.kind, mean_dorsal(&frames[span.frames.clone()]))? {
            pairs.push(DorsalPair {
                tracker_rotation: rotation,
                tracker_translation: translation,
                model_rotation: reference.root_pose.root_rotation,
                model_translation: reference.root_pose.root_translation,
            });
        }
    }
    let dorsal = match solve_dorsal_alignment(&pairs) {
        Ok(d) => Some(d),
        Err(CalibrationError::InsufficientPoses { got }) => {
            notices.push(format!("tracker alignment skipped: tracker seen in {got} distinct reference poses"));
            None
        }
        Err(e) => return Err(e),
    };

    Ok(SessionCalibration {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        model_hash: model.content_hash(),
        alignment,
        captures,
        shape,
        dorsal,
        notices,
    })
}

/// One pose per frame; errors name the offending frame.
pub fn reconstruct_frames(
    model: &HandModel,
    frames: &[FrameSet],
    calibration: &SessionCalibration,
) -> Result<Vec<PoseParams>, CalibrationError> {
    frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            reconstruct_pose(model, f, &calibration.alignment, calibration.dorsal.as_ref())
                .map_err(|e| CalibrationError::Frame { index, source: Box::new(e) })
        })
        .collect()
}

pub fn save_calibration(calibration: &SessionCalibration, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(calibration).map_err(|e| CalibrationError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CalibrationError::Io(format!("{}: {e}", path.display())))
}

/// Reads a calibration and checks that it was made for `model`.
pub fn load_calibration(path: impl AsRef<Path>, model: &HandModel) -> Result<SessionCalibration, CalibrationError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::Io(format!("{}: {e}", path.display())))?;
    let calibration: SessionCalibration =
        serde_json::from_str(&text).map_err(|e| CalibrationError::Invalid(format!("{}: {e}", path.display())))?;
    if calibration.schema_version != CALIBRATION_SCHEMA_VERSION {
        return Err(CalibrationError::Invalid(format!(
            "{}: unsupported schema version {}",
            path.display(),
            calibration.schema_version
        )));
    }
    let found = model.content_hash();
    if calibration.model_hash != found {
        return Err(CalibrationError::ModelHashMismatch { expected: calibration.model_hash, found });
    }
    Ok(calibration)
}
