//! Scenario files: what to simulate, with which hidden parameters.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "seed": 0,
//!   "rate_hz": 100.0,
//!   "shape": {"random": {"max_abs": 2.0}},
//!   "extrinsics": {"random": {"max_angle_deg": 30.0}},
//!   "noise": {"sigma_static_deg": 0.8, ...},
//!   "timing": {"jitter_ns": 0, "glove_clock_offset_ns": 25000000, "probe_interval_s": 1.0},
//!   "segments": [{"kind": "rest", "duration_s": 3.0}, ...]
//! }
//! ```
//!
//! The scenario seed drives everything; `noise.seed` is overwritten with it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::trajectory::{SegmentKind, Trajectory, TrajectoryBuilder, TrajectoryError};
use super::{synthesize_dorsal, synthesize_imu, DorsalSample, ImuSample, NoiseModel, SensorExtrinsics};
use crate::acquisition::{ClockProbe, SegmentMarker};
use crate::hand_model::{Finger, HandModel, ShapeParams};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Server-clock time of the first frame. Leaves room for negative glove clock offsets.
const SESSION_START_NS: u64 = 1_000_000_000;
const SHAPE_STREAM: u64 = 300;
const EXTRINSICS_STREAM: u64 = 301;
const TIMING_STREAM: u64 = 302;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSpec {
    Zero,
    Random { max_abs: f64 },
    Fixed(ShapeParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrinsicsSpec {
    Identity,
    Random { max_angle_deg: f64 },
    Fixed(SensorExtrinsics),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingModel {
    /// Uniform timestamp jitter, ± this many ns, on every stream.
    pub jitter_ns: u64,
    /// Glove clock minus server clock.
    pub glove_clock_offset_ns: i64,
    /// Seconds between clock probe exchanges (0 disables probes).
    pub probe_interval_s: f64,
}

impl Default for TimingModel {
    fn default() -> Self {
        Self { jitter_ns: 0, glove_clock_offset_ns: 0, probe_interval_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    pub shape: ShapeSpec,
    pub extrinsics: ExtrinsicsSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub timing: TimingModel,
    pub segments: Vec<SegmentSpec>,
}

fn default_rate() -> f64 {
    100.0
}

fn spec(kind: SegmentKind, duration_s: f64) -> SegmentSpec {
    SegmentSpec { kind, duration_s }
}

fn calibration_segments() -> Vec<SegmentSpec> {
    let mut s = vec![spec(SegmentKind::Rest, 3.0), spec(SegmentKind::XRot, 3.0), spec(SegmentKind::YRot, 3.0)];
    s.extend(Finger::OPPOSING.map(|f| spec(SegmentKind::Pinch(f), 3.0)));
    s
}

impl Scenario {
    fn base(segments: Vec<SegmentSpec>) -> Self {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            seed: 0,
            rate_hz: 100.0,
            shape: ShapeSpec::Random { max_abs: 2.0 },
            extrinsics: ExtrinsicsSpec::Random { max_angle_deg: 30.0 },
            noise: NoiseModel::default(),
            timing: TimingModel { glove_clock_offset_ns: 25_000_000, ..TimingModel::default() },
            segments,
        }
    }

    /// Built-in scenarios: `calibration`, `session`, `hinge`, `drift`.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            // three reference poses and four pinches
            "calibration" => Self::base(calibration_segments()),
            // calibration, free motion, then 10 s of each pinch
            "session" => {
                let mut s = calibration_segments();
                s.push(spec(SegmentKind::Motion, 10.0));
                s.extend(Finger::OPPOSING.map(|f| spec(SegmentKind::Pinch(f), 10.0)));
                Self::base(s)
            }
            // alignment poses, then a slow 0-90 degree sweep of one joint
            "hinge" => {
                let mut s = Self::base(vec![
                    spec(SegmentKind::Rest, 3.0),
                    spec(SegmentKind::XRot, 3.0),
                    spec(SegmentKind::YRot, 3.0),
                    spec(SegmentKind::Hinge, 30.0),
                ]);
                s.shape = ShapeSpec::Zero;
                s
            }
            // alignment poses, then a 30 minute static hold
            "drift" => {
                let mut s = Self::base(vec![
                    spec(SegmentKind::Rest, 3.0),
                    spec(SegmentKind::XRot, 3.0),
                    spec(SegmentKind::YRot, 3.0),
                    spec(SegmentKind::Hold, 1800.0),
                ]);
                s.shape = ShapeSpec::Zero;
                // heading drift is rate independent; 10 Hz keeps half an hour manageable
                s.rate_hz = 10.0;
                s
            }
            _ => return None,
        })
    }

    pub fn preset_names() -> [&'static str; 4] {
        ["calibration", "session", "hinge", "drift"]
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(format!("unsupported scenario schema version {}", self.schema_version));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0 && self.rate_hz <= 10_000.0) {
            return Err(format!("rate_hz must be in (0, 10000], got {}", self.rate_hz));
        }
        if self.segments.is_empty() {
            return Err("scenario has no segments".into());
        }
        for s in &self.segments {
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return Err(format!("segment {} has non-positive duration", s.kind.name()));
            }
            if s.kind == SegmentKind::Transition {
                return Err("transition segments are inserted automatically".into());
            }
        }
        match &self.shape {
            ShapeSpec::Random { max_abs } if !(0.0..=5.0).contains(max_abs) => {
                return Err(format!("shape.random.max_abs must be in [0, 5], got {max_abs}"))
            }
            _ => {}
        }
        match &self.extrinsics {
            ExtrinsicsSpec::Random { max_angle_deg } if !(0.0..=180.0).contains(max_angle_deg) => {
                return Err(format!("extrinsics.random.max_angle_deg must be in [0, 180], got {max_angle_deg}"))
            }
            ExtrinsicsSpec::Fixed(e) if e.installation.len() != super::NUM_SENSORS => {
                return Err("extrinsics.fixed must list 16 installation rotations".into())
            }
            _ => {}
        }
        self.noise.validate()?;
        let period = 1e9 / self.rate_hz;
        if self.timing.jitter_ns as f64 >= period / 2.0 {
            return Err("timing.jitter_ns must be below half the sample period".into());
        }
        if self.timing.glove_clock_offset_ns <= -(SESSION_START_NS as i64) {
            return Err(format!("timing.glove_clock_offset_ns must exceed -{SESSION_START_NS}"));
        }
        if !(self.timing.probe_interval_s.is_finite() && self.timing.probe_interval_s >= 0.0) {
            return Err("timing.probe_interval_s must be non-negative".into());
        }
        Ok(())
    }
}

/// Everything one simulated recording contains, plus its answer key.
#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub trajectory: Trajectory,
    pub extrinsics: SensorExtrinsics,
    /// Per sensor; timestamps on the glove clock.
    pub imu: Vec<Vec<ImuSample>>,
    /// Timestamps on the server clock.
    pub dorsal: Vec<DorsalSample>,
    pub probes: Vec<ClockProbe>,
    pub markers: Vec<SegmentMarker>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

fn shift(t: u64, offset: i64) -> u64 {
    (t as i64 + offset) as u64
}

pub fn simulate(scenario: &Scenario, model: &HandModel) -> Result<SimulatedSession, ScenarioError> {
    scenario.validate().map_err(ScenarioError::Invalid)?;
    let seed = scenario.seed;
    let rng = |stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    };
    let dim = model.shape_dim();
    let beta = match &scenario.shape {
        ShapeSpec::Zero => ShapeParams::zeros(dim),
        ShapeSpec::Random { max_abs } => {
            let mut r = rng(SHAPE_STREAM);
            ShapeParams::clipped((0..dim).map(|_| r.random_range(-max_abs..=*max_abs)).collect())
        }
        ShapeSpec::Fixed(b) => b.clone(),
    };
    let extrinsics = match &scenario.extrinsics {
        ExtrinsicsSpec::Identity => SensorExtrinsics::identity(),
        ExtrinsicsSpec::Random { max_angle_deg } => SensorExtrinsics::random(&mut rng(EXTRINSICS_STREAM), max_angle_deg.to_radians()),
        ExtrinsicsSpec::Fixed(e) => e.clone(),
    };
    let mut builder = TrajectoryBuilder::new(model, beta, scenario.rate_hz)?.starting_at(SESSION_START_NS);
    for s in &scenario.segments {
        builder.push(s.kind, s.duration_s)?;
    }
    let trajectory = builder.build();
    let noise = NoiseModel { seed, ..scenario.noise.clone() };
    let mut imu = synthesize_imu(&trajectory, &extrinsics, &noise, model);
    let mut dorsal = synthesize_dorsal(&trajectory, &extrinsics, &noise);

    let timing = &scenario.timing;
    let mut timing_rng = rng(TIMING_STREAM);
    let jitter = timing.jitter_ns as i64;
    let mut jittered = |t: u64| {
        if jitter == 0 {
            t
        } else {
            shift(t, timing_rng.random_range(-jitter..=jitter))
        }
    };
    for stream in imu.iter_mut() {
        for s in stream.iter_mut() {
            s.timestamp_ns = shift(jittered(s.timestamp_ns), timing.glove_clock_offset_ns);
        }
    }
    for d in dorsal.iter_mut() {
        d.timestamp_ns = jittered(d.timestamp_ns);
    }

    let mut probes = Vec::new();
    if timing.probe_interval_s > 0.0 {
        let interval = (timing.probe_interval_s * 1e9).round() as u64;
        let one_way = Uniform::new_inclusive(1_000_000u64, 3_000_000).expect("valid range");
        let end = trajectory.frames.last().map_or(SESSION_START_NS, |f| f.timestamp_ns);
        // first exchange just before the first sample so timestamps can be corrected from the start
        let mut t = SESSION_START_NS - 10_000_000;
        let mut id = 0u8;
        while t <= end {
            let (up, down) = (one_way.sample(&mut timing_rng), one_way.sample(&mut timing_rng));
            let server_rx = t + up;
            let server_tx = server_rx + 100_000;
            probes.push(ClockProbe {
                probe_id: id,
                t1: shift(t, timing.glove_clock_offset_ns),
                t2: server_rx,
                t3: server_tx,
                t4: shift(server_tx + down, timing.glove_clock_offset_ns),
            });
            id = id.wrapping_add(1);
            t += interval;
        }
    }

    let mut markers = Vec::new();
    for s in &trajectory.segments {
        markers.push(SegmentMarker { kind: SegmentKind::Transition, start_ns: s.transition_start_ns });
        markers.push(SegmentMarker { kind: s.kind, start_ns: s.start_ns });
    }

    Ok(SimulatedSession { trajectory, extrinsics, imu, dorsal, probes, markers })
}
