//! Ground-truth pose trajectories built from named segments.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::hand_model::{flexion_axis, refine_pinch, Finger, HandModel, PoseParams, ShapeParams};
use crate::so3::Rotation3;

/// Length of the smooth transition into every segment, seconds.
pub const EASE_IN_S: f64 = 0.5;
/// Link swept by the hinge segment (index proximal, rotating against the palm).
pub const HINGE_LINK: usize = 4;
const HINGE_RANGE_DEG: f64 = 90.0;

/// Reference poses used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Rest,
    XRot,
    YRot,
    Pinch(Finger),
}

impl From<ReferenceKind> for SegmentKind {
    fn from(k: ReferenceKind) -> Self {
        match k {
            ReferenceKind::Rest => SegmentKind::Rest,
            ReferenceKind::XRot => SegmentKind::XRot,
            ReferenceKind::YRot => SegmentKind::YRot,
            ReferenceKind::Pinch(f) => SegmentKind::Pinch(f),
        }
    }
}

/// What the hand does during a segment. Codes are the on-wire marker values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    /// Ease-in between segments; never used for calibration.
    Transition,
    Rest,
    XRot,
    YRot,
    Pinch(Finger),
    /// Index proximal joint swept 0 to 90 degrees at constant rate.
    Hinge,
    /// Keep the previous pose.
    Hold,
    /// All fingers flexing periodically, fast enough to count as dynamic.
    Motion,
}

impl SegmentKind {
    pub fn code(self) -> u8 {
        match self {
            SegmentKind::Transition => 0,
            SegmentKind::Rest => 1,
            SegmentKind::XRot => 2,
            SegmentKind::YRot => 3,
            SegmentKind::Pinch(f) => 3 + f.ordinal() as u8,
            SegmentKind::Hinge => 8,
            SegmentKind::Hold => 9,
            SegmentKind::Motion => 10,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => SegmentKind::Transition,
            1 => SegmentKind::Rest,
            2 => SegmentKind::XRot,
            3 => SegmentKind::YRot,
            4..=7 => SegmentKind::Pinch(Finger::ALL[(code - 3) as usize]),
            8 => SegmentKind::Hinge,
            9 => SegmentKind::Hold,
            10 => SegmentKind::Motion,
            _ => return None,
        })
    }

    pub fn name(self) -> String {
        match self {
            SegmentKind::Transition => "transition".into(),
            SegmentKind::Rest => "rest".into(),
            SegmentKind::XRot => "x_rot".into(),
            SegmentKind::YRot => "y_rot".into(),
            SegmentKind::Pinch(f) => format!("pinch_{}", f.name()),
            SegmentKind::Hinge => "hinge".into(),
            SegmentKind::Hold => "hold".into(),
            SegmentKind::Motion => "motion".into(),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        (0..=10).filter_map(SegmentKind::from_code).find(|k| k.name() == name)
    }

    /// Poses that feed world/mounting alignment.
    pub fn is_alignment_reference(self) -> bool {
        matches!(self, SegmentKind::Rest | SegmentKind::XRot | SegmentKind::YRot)
    }
}

impl Serialize for SegmentKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for SegmentKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        SegmentKind::from_name(&name)
            .filter(|k| *k != SegmentKind::Pinch(Finger::Thumb))
            .ok_or_else(|| serde::de::Error::custom(format!("unknown segment kind '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// First frame of the ease-in.
    pub transition_start_ns: u64,
    /// First frame of the segment proper.
    pub start_ns: u64,
    /// One period past the last frame.
    pub end_ns: u64,
}

impl Segment {
    pub fn contains(&self, t: u64) -> bool {
        (self.start_ns..self.end_ns).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub timestamp_ns: u64,
    pub pose: PoseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rate_hz: f64,
    pub beta: ShapeParams,
    pub frames: Vec<TrajectoryFrame>,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn period_ns(&self) -> u64 {
        period_ns(self.rate_hz)
    }

    pub fn segment_at(&self, t: u64) -> Option<&Segment> {
        self.segments.iter().find(|s| s.contains(t))
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.rate_hz
    }
}

fn period_ns(rate_hz: f64) -> u64 {
    (1e9 / rate_hz).round() as u64
}

fn smoothstep(u: f64) -> f64 {
    u * u * (3.0 - 2.0 * u)
}

/// Rotation axis of the hinge joint, in the palm frame.
pub fn hinge_axis(model: &HandModel) -> nalgebra::Vector3<f64> {
    flexion_axis(model.skeleton(), Finger::Index)
}

/// Signed rotation of a joint about `axis` (twist part of the swing-twist split), radians.
pub fn hinge_angle(joint: &Rotation3, axis: &nalgebra::Vector3<f64>) -> f64 {
    let q = joint.to_quaternion();
    let along = q.x() * axis.x + q.y() * axis.y + q.z() * axis.z;
    2.0 * along.atan2(q.w())
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("segment duration must be positive and finite, got {0} s")]
    InvalidDuration(f64),
    #[error("sample rate must be positive and finite, got {0} Hz")]
    InvalidRate(f64),
    #[error("model has no pinch preset for the {0}")]
    MissingPreset(&'static str),
    #[error(transparent)]
    Model(#[from] crate::hand_model::ModelError),
}

/// Appends segments one after another, each preceded by a 0.5 s ease-in
/// from wherever the hand was.
pub struct TrajectoryBuilder<'a> {
    model: &'a HandModel,
    beta: ShapeParams,
    rate_hz: f64,
    period_ns: u64,
    start_ns: u64,
    frames: Vec<TrajectoryFrame>,
    segments: Vec<Segment>,
    current: PoseParams,
}

impl<'a> TrajectoryBuilder<'a> {
    pub fn new(model: &'a HandModel, beta: ShapeParams, rate_hz: f64) -> Result<Self, TrajectoryError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(TrajectoryError::InvalidRate(rate_hz));
        }
        model.skeleton().check_beta(&beta)?;
        Ok(Self {
            model,
            beta,
            rate_hz,
            period_ns: period_ns(rate_hz),
            start_ns: 0,
            frames: Vec::new(),
            segments: Vec::new(),
            current: PoseParams::identity(),
        })
    }

    /// Timestamp of the first frame (default 0). Only valid before any segment is pushed.
    pub fn starting_at(mut self, start_ns: u64) -> Self {
        assert!(self.frames.is_empty(), "start time must be set before adding segments");
        self.start_ns = start_ns;
        self
    }

    fn next_timestamp(&self) -> u64 {
        self.start_ns + self.frames.len() as u64 * self.period_ns
    }

    fn emit(&mut self, pose: PoseParams) {
        let timestamp_ns = self.next_timestamp();
        self.current = pose.clone();
        self.frames.push(TrajectoryFrame { timestamp_ns, pose });
    }

    fn target_pose(&self, kind: SegmentKind) -> Result<PoseParams, TrajectoryError> {
        let x_rot = Rotation3::about_x(-FRAC_PI_2);
        let root = |r: Rotation3| PoseParams { root_rotation: r, ..PoseParams::identity() };
        Ok(match kind {
            SegmentKind::Rest | SegmentKind::Hinge | SegmentKind::Motion | SegmentKind::Transition => PoseParams::identity(),
            SegmentKind::XRot => root(x_rot),
            SegmentKind::YRot => root(Rotation3::about_y(FRAC_PI_2) * x_rot),
            SegmentKind::Hold => self.current.clone(),
            SegmentKind::Pinch(f) => {
                let preset = self.model.contacts().pinch(f).ok_or(TrajectoryError::MissingPreset(f.name()))?;
                let pair = *preset.pairs.first().ok_or(TrajectoryError::MissingPreset(f.name()))?;
                refine_pinch(self.model.skeleton(), &self.beta, &preset.pose, f, pair)?.0
            }
        })
    }

    /// Pose `t` seconds into a segment whose first pose is `start`.
    fn pose_at(&self, kind: SegmentKind, start: &PoseParams, t: f64, duration: f64) -> PoseParams {
        match kind {
            SegmentKind::Hinge => {
                let mut pose = start.clone();
                let angle = HINGE_RANGE_DEG.to_radians() * (t / duration).min(1.0);
                pose.set_link_local_rotation(HINGE_LINK, Rotation3::from_axis_angle(&hinge_axis(self.model), angle));
                pose
            }
            SegmentKind::Motion => {
                let mut pose = start.clone();
                let periods = [2.6, 2.0, 2.4, 2.8, 3.2];
                for (f, period) in Finger::ALL.into_iter().zip(periods) {
                    let amplitude: f64 = if f == Finger::Thumb { 30.0 } else { 60.0 };
                    let curl = amplitude.to_radians() * 0.5 * (1.0 - (TAU * t / period).cos());
                    let axis = flexion_axis(self.model.skeleton(), f);
                    for (link, w) in f.links().into_iter().zip([1.0, 0.9, 0.45]) {
                        pose.set_link_local_rotation(link, Rotation3::from_axis_angle(&axis, w * curl));
                    }
                }
                let wave = |amp: f64, period: f64| amp * (TAU * t / period).sin();
                pose.root_translation += nalgebra::Vector3::new(wave(40.0, 4.0), wave(30.0, 5.0), wave(20.0, 3.0));
                pose
            }
            _ => start.clone(),
        }
    }

    pub fn push(&mut self, kind: impl Into<SegmentKind>, duration_s: f64) -> Result<&mut Self, TrajectoryError> {
        let kind = kind.into();
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(TrajectoryError::InvalidDuration(duration_s));
        }
        let target = self.target_pose(kind)?;
        let transition_start_ns = self.next_timestamp();
        let ease_frames = (EASE_IN_S * self.rate_hz).round() as usize;
        let from = self.current.clone();
        for k in 0..ease_frames {
            let u = smoothstep(k as f64 / ease_frames as f64);
            self.emit(from.interpolate(&target, u));
        }
        let start_ns = self.next_timestamp();
        let frames = ((duration_s * self.rate_hz).round() as usize).max(1);
        let span = (frames.max(2) - 1) as f64 / self.rate_hz;
        for k in 0..frames {
            let t = k as f64 / self.rate_hz;
            let pose = self.pose_at(kind, &target, t, span);
            self.emit(pose);
        }
        self.segments.push(Segment { kind, transition_start_ns, start_ns, end_ns: self.next_timestamp() });
        Ok(self)
    }

    pub fn build(self) -> Trajectory {
        Trajectory { rate_hz: self.rate_hz, beta: self.beta, frames: self.frames, segments: self.segments }
    }
}

/// A single reference segment starting from the flat hand.
pub fn make_reference_trajectory(
    model: &HandModel,
    beta: &ShapeParams,
    kind: ReferenceKind,
    duration_s: f64,
    rate_hz: f64,
) -> Result<Trajectory, TrajectoryError> {
    let mut b = TrajectoryBuilder::new(model, beta.clone(), rate_hz)?;
    b.push(kind, duration_s)?;
    Ok(b.build())
}
