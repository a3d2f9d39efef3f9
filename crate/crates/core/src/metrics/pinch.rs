//! Thumb-to-fingertip distance over a pose stream.

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::hand_model::{Finger, HandModel, PoseParams, ShapeParams};

/// Mean distance between the thumb tip and `finger`'s tip over `poses`, mm.
pub fn pinch_distance(
    model: &HandModel,
    beta: &ShapeParams,
    poses: &[PoseParams],
    finger: Finger,
) -> Result<f64, MetricsError> {
    if poses.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for pose in poses {
        let thumb = model.fingertip_position(beta, pose, Finger::Thumb)?;
        let tip = model.fingertip_position(beta, pose, finger)?;
        sum += (thumb - tip).norm();
    }
    Ok(sum / poses.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerPinch {
    pub finger: Finger,
    pub frames: usize,
    pub mean_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchReport {
    pub fingers: Vec<FingerPinch>,
    /// Mean of the per-finger means.
    pub mean_mm: f64,
}

/// Per-finger pinch distances and their average.
pub fn pinch_report(
    model: &HandModel,
    beta: &ShapeParams,
    streams: &[(Finger, Vec<PoseParams>)],
) -> Result<PinchReport, MetricsError> {
    if streams.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let fingers = streams
        .iter()
        .map(|(finger, poses)| {
            Ok(FingerPinch { finger: *finger, frames: poses.len(), mean_mm: pinch_distance(model, beta, poses, *finger)? })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let mean_mm = fingers.iter().map(|f| f.mean_mm).sum::<f64>() / fingers.len() as f64;
    Ok(PinchReport { fingers, mean_mm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::default_model;

    #[test]
    fn preset_pinch_touches() {
        let model = default_model();
        let beta = model.zero_shape();
        for f in Finger::OPPOSING {
            let pose = model.contacts().pinch(f).unwrap().pose.clone();
            assert!(pinch_distance(&model, &beta, &[pose], f).unwrap() < 1e-9);
        }
    }

    #[test]
    fn rest_pose_separation_from_kinematics() {
        let model = default_model();
        let beta = model.zero_shape();
        let rest = PoseParams::identity();
        let mesh = model.build_mesh(&beta, &rest).unwrap();
        let tip = |f: Finger| mesh.vertices[model.fingertips.vertex(f)];
        let d = pinch_distance(&model, &beta, &[rest.clone(), rest.clone()], Finger::Index).unwrap();
        assert!((d - (tip(Finger::Thumb) - tip(Finger::Index)).norm()).abs() < 1e-12);
        let report = pinch_report(&model, &beta, &[(Finger::Index, vec![rest.clone()]), (Finger::Little, vec![rest])]).unwrap();
        let little = (tip(Finger::Thumb) - tip(Finger::Little)).norm();
        assert!((report.mean_mm - (d + little) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_stream() {
        let model = default_model();
        assert!(matches!(
            pinch_distance(&model, &model.zero_shape(), &[], Finger::Ring),
            Err(MetricsError::EmptyInput)
        ));
    }
}
