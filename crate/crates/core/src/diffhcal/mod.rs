//! Calibration and reconstruction.
//!
//! A sensor on link `i` reports `R^W_i` in its own world frame. With the
//! world alignment `A` and mounting error `C_i` the link's model-frame
//! rotation is `R^M_i = A · R^W_i · C_i⁻¹`. Reference poses with known
//! `R^M_i` pin down `A` and every `C_i`; contact poses then pin down the
//! shape coefficients.

mod pipeline;
mod shape;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::acquisition::FrameSet;
use crate::glove_sim::{ImuSample, SegmentKind, NUM_SENSORS};
use crate::hand_model::{serde_vec3, HandModel, ModelError, PoseParams, NUM_LINKS};
use crate::so3::{average_rotation, geodesic_angle, mean_rotation, project_to_so3, Rotation3, So3Error, UnitQuaternion};

pub use pipeline::{
    calibrate_session, load_calibration, reconstruct_frames, save_calibration, split_segments, CalibrationOptions,
    SegmentSpan, SessionCalibration, CALIBRATION_SCHEMA_VERSION,
};
pub use shape::{
    calibrate_shape, pinch_captures, shape_energy, shape_gradient, PinchCapture, ShapeOptions, ShapeResult,
};

/// Fewest samples accepted for one static segment.
pub const MIN_SEGMENT_SAMPLES: usize = 10;
/// Captures whose samples stray further than this from their mean are rejected.
pub const MAX_SEGMENT_SPREAD_DEG: f64 = 5.0;
pub const MAX_ALIGNMENT_ITERATIONS: usize = 200;
pub const ALIGNMENT_TOLERANCE_RAD: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("static segment has {got} samples, need at least {min}")]
    TooFewSamples { got: usize, min: usize },
    #[error("sensor {sensor} moved {spread_deg:.2} deg during a static segment (limit {MAX_SEGMENT_SPREAD_DEG})")]
    ExcessiveSpread { sensor: usize, spread_deg: f64 },
    #[error("need at least two distinct reference poses, got {got}")]
    InsufficientPoses { got: usize },
    #[error("no virtual reference for pose '{0}'")]
    UnknownReference(String),
    #[error("frame is missing sensors {0:?}")]
    MissingSensor(Vec<usize>),
    #[error("no pinch captures to fit the shape to")]
    NoCaptures,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("calibration was made for model {expected}, not {found}")]
    ModelHashMismatch { expected: String, found: String },
    #[error(transparent)]
    So3(#[from] So3Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(String),
    #[error("segment '{kind}': {source}")]
    Segment { kind: String, source: Box<CalibrationError> },
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: Box<CalibrationError> },
}

/// Chordal mean of one sensor's readings over a static segment, and the
/// largest deviation from it in degrees.
pub fn aggregate_static_segment(samples: &[ImuSample]) -> Result<(Rotation3, f64), CalibrationError> {
    if samples.len() < MIN_SEGMENT_SAMPLES {
        return Err(CalibrationError::TooFewSamples { got: samples.len(), min: MIN_SEGMENT_SAMPLES });
    }
    let sensor = samples[0].sensor_id;
    if samples.iter().any(|s| s.sensor_id != sensor) {
        return Err(CalibrationError::Invalid("samples from more than one sensor".into()));
    }
    let rotations: Vec<Rotation3> = samples.iter().map(|s| s.orientation.to_rotation()).collect();
    let mean = mean_rotation(&rotations)?;
    let spread = rotations.iter().map(|r| geodesic_angle(r, &mean)).fold(0.0, f64::max).to_degrees();
    if spread >= MAX_SEGMENT_SPREAD_DEG {
        return Err(CalibrationError::ExcessiveSpread { sensor: sensor as usize, spread_deg: spread });
    }
    Ok((mean, spread))
}

/// All 16 sensors aggregated over one static segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCapture {
    pub kind: SegmentKind,
    /// Indexed by sensor id.
    pub orientations: Vec<UnitQuaternion>,
    pub sample_count: usize,
    pub spread_deg: Vec<f64>,
}

impl ReferenceCapture {
    pub fn from_frames(kind: SegmentKind, frames: &[FrameSet]) -> Result<Self, CalibrationError> {
        let mut orientations = Vec::with_capacity(NUM_SENSORS);
        let mut spread_deg = Vec::with_capacity(NUM_SENSORS);
        for s in 0..NUM_SENSORS {
            let samples: Vec<ImuSample> = frames.iter().map(|f| f.imu[s]).collect();
            let (mean, spread) = aggregate_static_segment(&samples)?;
            orientations.push(mean.to_quaternion());
            spread_deg.push(spread);
        }
        Ok(Self { kind, orientations, sample_count: frames.len(), spread_deg })
    }

    pub fn rotation(&self, sensor: usize) -> Rotation3 {
        self.orientations[sensor].to_rotation()
    }
}

/// Model-frame link rotations of one reference pose.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualReference {
    pub kind: SegmentKind,
    pub link_rotations: Vec<Rotation3>,
    pub root_pose: PoseParams,
}

/// The model's reference-group presets (rest, x_rot, y_rot) as link rotations.
pub fn virtual_references(model: &HandModel) -> Vec<VirtualReference> {
    model
        .contacts()
        .group("reference")
        .filter_map(|p| {
            let kind = SegmentKind::from_name(&p.name)?;
            Some(VirtualReference { kind, link_rotations: model.link_rotations(&p.pose), root_pose: p.pose.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Model world from IMU world.
    pub world_alignment: Rotation3,
    /// Per sensor, link frame to sensor frame.
    pub installation: Vec<Rotation3>,
    /// Pose kinds in the order of the residual columns.
    pub poses: Vec<SegmentKind>,
    /// `[sensor][pose]`, degrees.
    pub residuals_deg: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Σ‖R^M C − A R^W‖²_F after each iteration.
    pub objective_trace: Vec<f64>,
}

impl CalibrationResult {
    pub fn identity() -> Self {
        Self {
            world_alignment: Rotation3::identity(),
            installation: vec![Rotation3::identity(); NUM_SENSORS],
            poses: Vec::new(),
            residuals_deg: vec![Vec::new(); NUM_SENSORS],
            iterations: 0,
            converged: true,
            objective_trace: Vec::new(),
        }
    }

    pub fn max_residual_deg(&self) -> f64 {
        self.residuals_deg.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn link_rotation(&self, sensor: usize, reading: &Rotation3) -> Rotation3 {
        corrected_link_rotation(reading, &self.world_alignment, &self.installation[sensor])
    }
}

/// `A · R^W · C⁻¹`.
pub fn corrected_link_rotation(reading: &Rotation3, world_alignment: &Rotation3, installation: &Rotation3) -> Rotation3 {
    *world_alignment * *reading * installation.inverse()
}

fn alignment_objective(pairs: &[(Vec<Rotation3>, Vec<Rotation3>)], a: &Rotation3, c: &[Rotation3]) -> f64 {
    let mut total = 0.0;
    for (model, world) in pairs {
        for i in 0..NUM_SENSORS {
            total += ((model[i] * c[i]).matrix() - (*a * world[i]).matrix()).norm_squared();
        }
    }
    total
}

/// Least-squares `A` and `C_i` from captures of at least two distinct
/// reference poses, by alternating closed-form updates starting from `C_i = I`.
pub fn solve_alignment(
    captures: &[ReferenceCapture],
    references: &[VirtualReference],
) -> Result<CalibrationResult, CalibrationError> {
    let mut pairs: Vec<(Vec<Rotation3>, Vec<Rotation3>)> = Vec::new();
    let mut poses = Vec::new();
    for cap in captures {
        if cap.orientations.len() != NUM_SENSORS {
            return Err(CalibrationError::MissingSensor((cap.orientations.len()..NUM_SENSORS).collect()));
        }
        let r = references
            .iter()
            .find(|r| r.kind == cap.kind)
            .ok_or_else(|| CalibrationError::UnknownReference(cap.kind.name()))?;
        if !poses.contains(&cap.kind) {
            poses.push(cap.kind);
        }
        pairs.push((r.link_rotations.clone(), (0..NUM_SENSORS).map(|i| cap.rotation(i)).collect()));
    }
    if poses.len() < 2 {
        return Err(CalibrationError::InsufficientPoses { got: poses.len() });
    }

    let mut c = vec![Rotation3::identity(); NUM_SENSORS];
    let mut a = Rotation3::identity();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let estimates_len = pairs.len() * NUM_SENSORS;
    let weights = vec![1.0; estimates_len];
    while iterations < MAX_ALIGNMENT_ITERATIONS {
        iterations += 1;
        let estimates: Vec<Rotation3> = pairs
            .iter()
            .flat_map(|(m, w)| (0..NUM_SENSORS).map(move |i| (m, w, i)))
            .map(|(m, w, i)| m[i] * c[i] * w[i].inverse())
            .collect();
        let new_a = average_rotation(&estimates, &weights)?;
        let mut change = geodesic_angle(&a, &new_a);
        a = new_a;
        for (i, ci) in c.iter_mut().enumerate() {
            let mut sum = nalgebra::Matrix3::zeros();
            for (m, w) in &pairs {
                sum += (m[i].inverse() * a * w[i]).matrix();
            }
            let new_c = project_to_so3(&sum)?;
            change = change.max(geodesic_angle(ci, &new_c));
            *ci = new_c;
        }
        trace.push(alignment_objective(&pairs, &a, &c));
        if change < ALIGNMENT_TOLERANCE_RAD {
            converged = true;
            break;
        }
    }

    let residuals_deg = (0..NUM_SENSORS)
        .map(|i| {
            pairs.iter().map(|(m, w)| geodesic_angle(&(m[i] * c[i]), &(a * w[i])).to_degrees()).collect()
        })
        .collect();
    Ok(CalibrationResult {
        world_alignment: a,
        installation: c,
        poses,
        residuals_deg,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Parent-local joint rotation: `parent⁻¹ · child`.
pub fn joint_rotation(child: &Rotation3, parent: &Rotation3) -> Rotation3 {
    parent.inverse() * *child
}

/// World-frame relative rotation `child · parent⁻¹`. Equal to
/// [`joint_rotation`] only when the parent is the identity; kept for diagnostics.
pub fn joint_rotation_world(child: &Rotation3, parent: &Rotation3) -> Rotation3 {
    *child * parent.inverse()
}

/// Pose whose link rotations equal `links` (model frame), root translation zero.
pub fn pose_from_link_rotations(model: &HandModel, links: &[Rotation3]) -> PoseParams {
    assert_eq!(links.len(), NUM_LINKS, "one rotation per link");
    let mut pose = PoseParams::identity();
    for (i, l) in model.skeleton().links().iter().enumerate() {
        let local = match l.parent {
            None => links[i],
            Some(p) => joint_rotation(&links[i], &links[p]),
        };
        pose.set_link_local_rotation(i, local);
    }
    pose
}

/// World-frame relative rotations for every non-root link.
pub fn world_joint_rotations(model: &HandModel, links: &[Rotation3]) -> Vec<Rotation3> {
    model
        .skeleton()
        .links()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.parent.map(|p| joint_rotation_world(&links[i], &links[p])))
        .collect()
}

/// Maps tracker-world poses into the model world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DorsalAlignment {
    pub rotation: Rotation3,
    #[serde(with = "serde_vec3")]
    pub translation: Vector3<f64>,
}

impl DorsalAlignment {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }
}

/// A tracker reading and the model root pose it corresponds to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DorsalPair {
    pub tracker_rotation: Rotation3,
    pub tracker_translation: Vector3<f64>,
    pub model_rotation: Rotation3,
    pub model_translation: Vector3<f64>,
}

/// Rotations distinct by less than this are treated as the same pose.
const DISTINCT_POSE_RAD: f64 = 1e-3;

pub fn solve_dorsal_alignment(pairs: &[DorsalPair]) -> Result<DorsalAlignment, CalibrationError> {
    let mut distinct: Vec<Rotation3> = Vec::new();
    for p in pairs {
        if distinct.iter().all(|r| geodesic_angle(r, &p.model_rotation) > DISTINCT_POSE_RAD) {
            distinct.push(p.model_rotation);
        }
    }
    if distinct.len() < 2 {
        return Err(CalibrationError::InsufficientPoses { got: distinct.len() });
    }
    let estimates: Vec<Rotation3> = pairs.iter().map(|p| p.model_rotation * p.tracker_rotation.inverse()).collect();
    let rotation = mean_rotation(&estimates)?;
    let sum: Vector3<f64> = pairs.iter().map(|p| p.model_translation - rotation * p.tracker_translation).sum();
    Ok(DorsalAlignment { rotation, translation: sum / pairs.len() as f64 })
}

/// Model-frame link rotations from one reading per sensor.
pub fn corrected_links(calib: &CalibrationResult, readings: &[Option<UnitQuaternion>]) -> Result<Vec<Rotation3>, CalibrationError> {
    let missing: Vec<usize> = (0..NUM_SENSORS).filter(|&i| readings.get(i).copied().flatten().is_none()).collect();
    if !missing.is_empty() {
        return Err(CalibrationError::MissingSensor(missing));
    }
    Ok((0..NUM_SENSORS).map(|i| calib.link_rotation(i, &readings[i].expect("checked").to_rotation())).collect())
}

/// Pose for one synchronized frame. Root translation comes from the tracker
/// when both a tracker sample and an alignment are available, else zero.
pub fn reconstruct_pose(
    model: &HandModel,
    frame: &FrameSet,
    calib: &CalibrationResult,
    dorsal: Option<&DorsalAlignment>,
) -> Result<PoseParams, CalibrationError> {
    let mut readings = [None; NUM_SENSORS];
    for s in &frame.imu {
        if let Some(slot) = readings.get_mut(s.sensor_id as usize) {
            *slot = Some(s.orientation);
        }
    }
    let links = corrected_links(calib, &readings)?;
    let mut pose = pose_from_link_rotations(model, &links);
    if let (Some(d), Some(a)) = (&frame.dorsal, dorsal) {
        pose.root_translation = a.apply(&d.translation);
    }
    Ok(pose)
}
