//! Simulated glove: ground-truth trajectories and the sensor streams a real
//! glove would emit for them.
//!
//! Each IMU reports its orientation in its own world frame. For link `i` with
//! model-frame rotation `R_m`, the reading is `A⁻¹ · R_m · C_i`, where `A`
//! maps IMU-world to model-world and `C_i` is the mounting error of sensor
//! `i`. Noise and heading drift are then applied in the IMU world frame.

mod scenario;
mod trajectory;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::hand_model::{serde_vec3, HandModel, NUM_LINKS};
use crate::so3::{geodesic_angle, random_rotation_within, Rotation3, UnitQuaternion};

pub use scenario::{
    simulate, ExtrinsicsSpec, Scenario, ScenarioError, SegmentSpec, ShapeSpec, SimulatedSession, TimingModel,
    SCENARIO_SCHEMA_VERSION,
};
pub use trajectory::{
    hinge_angle, hinge_axis, make_reference_trajectory, ReferenceKind, Segment, SegmentKind, Trajectory,
    TrajectoryBuilder, TrajectoryError, TrajectoryFrame, EASE_IN_S, HINGE_LINK,
};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.80665;

pub const NUM_SENSORS: usize = NUM_LINKS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorExtrinsics {
    /// Model world from IMU world.
    pub world_alignment: Rotation3,
    /// Per-sensor mounting error, link frame to sensor frame.
    pub installation: Vec<Rotation3>,
    /// Tracker world from model world.
    pub dorsal_rotation: Rotation3,
    #[serde(with = "serde_vec3")]
    pub dorsal_translation: Vector3<f64>,
}

impl SensorExtrinsics {
    pub fn identity() -> Self {
        Self {
            world_alignment: Rotation3::identity(),
            installation: vec![Rotation3::identity(); NUM_SENSORS],
            dorsal_rotation: Rotation3::identity(),
            dorsal_translation: Vector3::zeros(),
        }
    }

    /// All rotations uniform within `max_angle` of identity; tracker offset
    /// within ±500 mm per axis.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Self {
        Self {
            world_alignment: random_rotation_within(rng, max_angle),
            installation: (0..NUM_SENSORS).map(|_| random_rotation_within(rng, max_angle)).collect(),
            dorsal_rotation: random_rotation_within(rng, max_angle),
            dorsal_translation: Vector3::from_fn(|_, _| rng.random_range(-500.0..500.0)),
        }
    }
}

/// Sensor error model. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub sigma_static_deg: f64,
    pub sigma_dynamic_deg: f64,
    /// Link angular rate (deg/s) above which the dynamic sigma applies.
    pub dynamic_threshold_deg_s: f64,
    /// Heading random walk, degrees per √minute.
    pub drift_rate_deg_sqrt_min: f64,
    pub dorsal_sigma_pos_mm: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_static_deg: 0.8,
            sigma_dynamic_deg: 2.5,
            dynamic_threshold_deg_s: 30.0,
            drift_rate_deg_sqrt_min: 1.0,
            dorsal_sigma_pos_mm: 0.5,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma_static_deg: 0.0,
            sigma_dynamic_deg: 0.0,
            drift_rate_deg_sqrt_min: 0.0,
            dorsal_sigma_pos_mm: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("sigma_static_deg", self.sigma_static_deg),
            ("sigma_dynamic_deg", self.sigma_dynamic_deg),
            ("dynamic_threshold_deg_s", self.dynamic_threshold_deg_s),
            ("drift_rate_deg_sqrt_min", self.drift_rate_deg_sqrt_min),
            ("dorsal_sigma_pos_mm", self.dorsal_sigma_pos_mm),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("noise.{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub sensor_id: u8,
    pub timestamp_ns: u64,
    pub orientation: UnitQuaternion,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vector3<f64>,
    /// Specific force in the sensor frame, m/s².
    pub linear_acceleration: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DorsalSample {
    pub timestamp_ns: u64,
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

// Independent random streams derived from the one seed.
const NOISE_STREAM: u64 = 0;
const DRIFT_STREAM: u64 = 100;
const DORSAL_STREAM: u64 = 200;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Random rotation whose rotation vector is isotropic Gaussian with RMS angle `sigma`.
fn gaussian_rotation<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Rotation3 {
    if sigma == 0.0 {
        return Rotation3::identity();
    }
    let n = Normal::new(0.0, sigma / 3f64.sqrt()).expect("sigma is finite");
    Rotation3::from_rotation_vector(&Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)))
}

/// Sensor-world orientation of every sensor at every frame, before noise: `A⁻¹ R_m C_i`.
pub fn ideal_sensor_orientations(
    trajectory: &Trajectory,
    extrinsics: &SensorExtrinsics,
    model: &HandModel,
) -> Vec<[Rotation3; NUM_SENSORS]> {
    let a_inv = extrinsics.world_alignment.inverse();
    trajectory
        .frames
        .iter()
        .map(|f| {
            let links = model.link_rotations(&f.pose);
            std::array::from_fn(|i| a_inv * links[i] * extrinsics.installation[i])
        })
        .collect()
}

/// One stream per sensor, each with one sample per trajectory frame.
pub fn synthesize_imu(
    trajectory: &Trajectory,
    extrinsics: &SensorExtrinsics,
    noise: &NoiseModel,
    model: &HandModel,
) -> Vec<Vec<ImuSample>> {
    assert_eq!(extrinsics.installation.len(), NUM_SENSORS, "one installation rotation per sensor");
    let ideal = ideal_sensor_orientations(trajectory, extrinsics, model);
    let n = ideal.len();
    let dt = 1.0 / trajectory.rate_hz;
    let threshold = noise.dynamic_threshold_deg_s.to_radians();
    let sigma_static = noise.sigma_static_deg.to_radians();
    let sigma_dynamic = noise.sigma_dynamic_deg.to_radians();
    // E|W(t)| = rate·√t for a Gaussian walk W needs std rate·√(π/2)·√t.
    let drift_step_sigma =
        noise.drift_rate_deg_sqrt_min.to_radians() * (std::f64::consts::FRAC_PI_2 * dt / 60.0).sqrt();
    let drift_dist = Normal::new(0.0, drift_step_sigma).expect("finite drift");

    (0..NUM_SENSORS)
        .map(|s| {
            let mut noise_rng = stream_rng(noise.seed, NOISE_STREAM + s as u64);
            let mut drift_rng = stream_rng(noise.seed, DRIFT_STREAM + s as u64);
            let mut heading = 0.0;
            (0..n)
                .map(|k| {
                    let r = ideal[k][s];
                    let (prev, next) = if k == 0 { (r, ideal.get(1).map_or(r, |f| f[s])) } else { (ideal[k - 1][s], r) };
                    let step = prev.inverse() * next;
                    let angular_velocity = if n > 1 { step.to_rotation_vector() / dt } else { Vector3::zeros() };
                    // the sensor rate equals the link rate; mounting is rigid
                    let rate = geodesic_angle(&prev, &next) / dt;
                    let sigma = if rate > threshold { sigma_dynamic } else { sigma_static };
                    if k > 0 && drift_step_sigma > 0.0 {
                        heading += drift_dist.sample(&mut drift_rng);
                    }
                    let emitted = Rotation3::about_z(heading) * gaussian_rotation(&mut noise_rng, sigma) * r;
                    ImuSample {
                        sensor_id: s as u8,
                        timestamp_ns: trajectory.frames[k].timestamp_ns,
                        orientation: emitted.to_quaternion(),
                        angular_velocity,
                        linear_acceleration: r.inverse() * Vector3::new(0.0, 0.0, GRAVITY),
                    }
                })
                .collect()
        })
        .collect()
}

/// Tracker readings of the palm: `dorsal_A ∘ root transform`, with Gaussian
/// position noise per axis.
pub fn synthesize_dorsal(trajectory: &Trajectory, extrinsics: &SensorExtrinsics, noise: &NoiseModel) -> Vec<DorsalSample> {
    let mut rng = stream_rng(noise.seed, DORSAL_STREAM);
    let dist = Normal::new(0.0, noise.dorsal_sigma_pos_mm).expect("finite sigma");
    trajectory
        .frames
        .iter()
        .map(|f| {
            let mut translation = extrinsics.dorsal_rotation * f.pose.root_translation + extrinsics.dorsal_translation;
            if noise.dorsal_sigma_pos_mm > 0.0 {
                translation += Vector3::from_fn(|_, _| dist.sample(&mut rng));
            }
            DorsalSample {
                timestamp_ns: f.timestamp_ns,
                rotation: extrinsics.dorsal_rotation * f.pose.root_rotation,
                translation,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
