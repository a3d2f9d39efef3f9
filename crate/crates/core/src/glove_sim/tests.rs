use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use super::*;
use crate::acquisition::estimate_clock_offset;
use crate::hand_model::{default_model, Finger, ShapeParams};

fn model() -> &'static HandModel {
    static M: OnceLock<HandModel> = OnceLock::new();
    M.get_or_init(default_model)
}

fn zero() -> ShapeParams {
    ShapeParams::zeros(model().shape_dim())
}

fn hold(kind: SegmentKind, seconds: f64, rate: f64, beta: ShapeParams) -> Trajectory {
    let mut b = TrajectoryBuilder::new(model(), beta, rate).unwrap();
    b.push(kind, seconds).unwrap();
    b.build()
}

#[test]
fn rest_is_identity() {
    let t = make_reference_trajectory(model(), &zero(), ReferenceKind::Rest, 1.0, 100.0).unwrap();
    assert_eq!(t.frames.len(), 150);
    for f in &t.frames {
        assert_eq!(f.pose, crate::hand_model::PoseParams::identity());
    }
    assert!(t.frames.windows(2).all(|w| w[0].timestamp_ns < w[1].timestamp_ns));
}

#[test]
fn x_rot_and_y_rot_roots() {
    let t = make_reference_trajectory(model(), &zero(), ReferenceKind::XRot, 1.0, 100.0).unwrap();
    let seg = t.segments[0];
    let held: Vec<_> = t.frames.iter().filter(|f| seg.contains(f.timestamp_ns)).collect();
    assert_eq!(held.len(), 100);
    let rx = Rotation3::about_x(-FRAC_PI_2);
    for f in held {
        assert!(geodesic_angle(&f.pose.root_rotation, &rx) < 1e-12);
    }
    let t = make_reference_trajectory(model(), &zero(), ReferenceKind::YRot, 1.0, 100.0).unwrap();
    let last = t.frames.last().unwrap();
    let expected = Rotation3::about_y(FRAC_PI_2) * rx;
    assert!(geodesic_angle(&last.pose.root_rotation, &expected) < 1e-12);
    // palm normal (+z in the rest pose) ends up horizontal after x_rot
    assert!((rx * Vector3::z()).z.abs() < 1e-12);
}

#[test]
fn ease_in_is_smooth() {
    let mut b = TrajectoryBuilder::new(model(), zero(), 100.0).unwrap();
    b.push(SegmentKind::Rest, 1.0).unwrap().push(SegmentKind::XRot, 1.0).unwrap();
    let t = b.build();
    let max_step = t
        .frames
        .windows(2)
        .map(|w| geodesic_angle(&w[0].pose.root_rotation, &w[1].pose.root_rotation))
        .fold(0.0, f64::max);
    // 90 degrees over 0.5 s with a smoothstep peaks at 1.5x the mean rate
    assert!(max_step < 1.6 * FRAC_PI_2 / 50.0, "{max_step}");
    assert_eq!(t.segments[1].transition_start_ns, t.segments[0].end_ns);
}

#[test]
fn pinch_contacts_touch_for_generating_shape() {
    let beta = ShapeParams::new(vec![1.5, -2.0, 0.7, 2.0, -1.2, 0.4, -0.8, 1.9, -1.5, 0.3]).unwrap();
    for f in Finger::OPPOSING {
        let t = make_reference_trajectory(model(), &beta, ReferenceKind::Pinch(f), 0.2, 100.0).unwrap();
        let pose = &t.frames.last().unwrap().pose;
        let (a, b) = model().contacts().pinch(f).unwrap().pairs[0];
        let mesh = model().build_mesh(&beta, pose).unwrap();
        let d = (mesh.vertices[a] - mesh.vertices[b]).norm();
        assert!(d < 1.0, "{f:?}: {d} mm");
    }
}

#[test]
fn noiseless_identity_extrinsics_emit_link_rotations() {
    let traj = hold(SegmentKind::Motion, 2.0, 100.0, zero());
    let imu = synthesize_imu(&traj, &SensorExtrinsics::identity(), &NoiseModel::noiseless(), model());
    assert_eq!(imu.len(), 16);
    for (k, frame) in traj.frames.iter().enumerate() {
        let links = model().link_rotations(&frame.pose);
        for s in 0..16 {
            let sample = &imu[s][k];
            assert_eq!(sample.sensor_id as usize, s);
            assert_eq!(sample.timestamp_ns, frame.timestamp_ns);
            assert!(geodesic_angle(&sample.orientation.to_rotation(), &links[s]) < 1e-12);
        }
    }
}

#[test]
fn noiseless_random_extrinsics_invert() {
    let mut rng = stream_rng(7, 0);
    let ext = SensorExtrinsics::random(&mut rng, 30f64.to_radians());
    let traj = hold(SegmentKind::Motion, 1.0, 100.0, zero());
    let imu = synthesize_imu(&traj, &ext, &NoiseModel::noiseless(), model());
    for (k, frame) in traj.frames.iter().enumerate() {
        let links = model().link_rotations(&frame.pose);
        for s in 0..16 {
            let recovered = ext.world_alignment * imu[s][k].orientation.to_rotation() * ext.installation[s].inverse();
            assert!(geodesic_angle(&recovered, &links[s]) < 1e-9);
        }
    }
}

#[test]
fn angular_velocity_and_gravity() {
    let traj = hold(SegmentKind::Hinge, 3.0, 100.0, zero());
    let imu = synthesize_imu(&traj, &SensorExtrinsics::identity(), &NoiseModel::noiseless(), model());
    // 90 degrees over the sweep at constant rate
    let k = traj.frames.len() - 100;
    let rate = imu[HINGE_LINK][k].angular_velocity.norm();
    let expected = 90f64.to_radians() / ((300 - 1) as f64 / 100.0);
    assert!((rate - expected).abs() < 1e-9, "{rate} vs {expected}");
    assert!(imu[0][k].angular_velocity.norm() < 1e-12);
    for s in 0..16 {
        let g = imu[s][k].orientation.to_rotation() * imu[s][k].linear_acceleration;
        assert!((g - Vector3::new(0.0, 0.0, GRAVITY)).norm() < 1e-9);
    }
}

#[test]
fn same_seed_same_streams() {
    let traj = hold(SegmentKind::Motion, 1.0, 100.0, zero());
    let ext = SensorExtrinsics::random(&mut stream_rng(3, 1), 0.5);
    let noise = NoiseModel { seed: 42, ..NoiseModel::default() };
    let a = synthesize_imu(&traj, &ext, &noise, model());
    let b = synthesize_imu(&traj, &ext, &noise, model());
    let bits = |v: &Vec<Vec<ImuSample>>| -> Vec<u64> {
        v.iter().flatten().flat_map(|s| s.orientation.to_array()).map(f64::to_bits).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(synthesize_dorsal(&traj, &ext, &noise), synthesize_dorsal(&traj, &ext, &noise));
    let c = synthesize_imu(&traj, &ext, &NoiseModel { seed: 43, ..noise }, model());
    assert_ne!(bits(&a), bits(&c));
}

fn mean_noise_angle(kind: SegmentKind, noise: &NoiseModel) -> (f64, f64) {
    let traj = hold(kind, 8.0, 100.0, zero());
    let ext = SensorExtrinsics::identity();
    let ideal = ideal_sensor_orientations(&traj, &ext, model());
    let imu = synthesize_imu(&traj, &ext, noise, model());
    let threshold = noise.dynamic_threshold_deg_s.to_radians();
    let (mut slow, mut fast) = (Vec::new(), Vec::new());
    for s in 0..16 {
        for k in 1..ideal.len() {
            let rate = geodesic_angle(&ideal[k - 1][s], &ideal[k][s]) * 100.0;
            let err = geodesic_angle(&imu[s][k].orientation.to_rotation(), &ideal[k][s]);
            if rate > threshold { fast.push(err) } else { slow.push(err) }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    (mean(&slow), mean(&fast))
}

#[test]
fn static_noise_magnitude() {
    let noise = NoiseModel { drift_rate_deg_sqrt_min: 0.0, seed: 5, ..NoiseModel::default() };
    let (slow, _) = mean_noise_angle(SegmentKind::Rest, &noise);
    let sigma = noise.sigma_static_deg.to_radians();
    assert!((0.8 * sigma..=1.2 * sigma).contains(&slow), "{} deg", slow.to_degrees());
}

#[test]
fn dynamic_noise_magnitude() {
    let noise = NoiseModel { drift_rate_deg_sqrt_min: 0.0, seed: 6, ..NoiseModel::default() };
    let (slow, fast) = mean_noise_angle(SegmentKind::Motion, &noise);
    let (ss, sd) = (noise.sigma_static_deg.to_radians(), noise.sigma_dynamic_deg.to_radians());
    assert!((0.8 * ss..=1.2 * ss).contains(&slow), "{} deg", slow.to_degrees());
    assert!((0.8 * sd..=1.2 * sd).contains(&fast), "{} deg", fast.to_degrees());
}

#[test]
fn drift_grows_with_root_time() {
    // noise off; mean heading error after t minutes should be rate * sqrt(t)
    let noise = NoiseModel { sigma_static_deg: 0.0, sigma_dynamic_deg: 0.0, ..NoiseModel::default() };
    let traj = hold(SegmentKind::Rest, 1800.0, 2.0, zero());
    let ext = SensorExtrinsics::identity();
    let ideal = ideal_sensor_orientations(&traj, &ext, model());
    let at = |minutes: f64, seeds: std::ops::Range<u64>| {
        let k = (EASE_IN_S * 2.0) as usize + (minutes * 120.0) as usize - 1;
        let mut errs = Vec::new();
        for seed in seeds {
            let imu = synthesize_imu(&traj, &ext, &NoiseModel { seed, ..noise.clone() }, model());
            for s in 0..16 {
                let e = geodesic_angle(&imu[s][k].orientation.to_rotation(), &ideal[k][s]);
                errs.push(e.to_degrees());
            }
        }
        errs.iter().sum::<f64>() / errs.len() as f64
    };
    let m30 = at(30.0, 0..12);
    let m5 = at(5.0, 0..12);
    // 192 draws of |N|; relative standard error about 4.5%
    assert!((m30 / 30f64.sqrt() - 1.0).abs() < 0.15, "30 min: {m30}");
    assert!((m5 / 5f64.sqrt() - 1.0).abs() < 0.15, "5 min: {m5}");
}

#[test]
fn dorsal_noise_and_timestamps() {
    let traj = hold(SegmentKind::Rest, 100.0, 100.0, zero());
    let ext = SensorExtrinsics::identity();
    let d = synthesize_dorsal(&traj, &ext, &NoiseModel { seed: 11, ..NoiseModel::default() });
    assert_eq!(d.len(), traj.frames.len());
    assert!(d.iter().zip(&traj.frames).all(|(s, f)| s.timestamp_ns == f.timestamp_ns));
    for axis in 0..3 {
        let v: Vec<f64> = d.iter().map(|s| s.translation[axis]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((0.45..=0.55).contains(&std), "axis {axis}: {std}");
    }
    let clean = synthesize_dorsal(&traj, &ext, &NoiseModel::noiseless());
    for (s, f) in clean.iter().zip(&traj.frames) {
        assert_eq!(s.translation, f.pose.root_translation);
        assert_eq!(s.rotation, f.pose.root_rotation);
    }
}

#[test]
fn dorsal_applies_tracker_transform() {
    let traj = hold(SegmentKind::Motion, 1.0, 100.0, zero());
    let ext = SensorExtrinsics::random(&mut stream_rng(9, 9), 0.4);
    let d = synthesize_dorsal(&traj, &ext, &NoiseModel::noiseless());
    for (s, f) in d.iter().zip(&traj.frames) {
        let expected = ext.dorsal_rotation * f.pose.root_translation + ext.dorsal_translation;
        assert!((s.translation - expected).norm() < 1e-9);
        assert!(geodesic_angle(&s.rotation, &(ext.dorsal_rotation * f.pose.root_rotation)) < 1e-12);
    }
}

#[test]
fn scenario_session_structure() {
    let sc = Scenario { seed: 4, ..Scenario::preset("calibration").unwrap() };
    let s = simulate(&sc, model()).unwrap();
    let n = s.trajectory.frames.len();
    assert_eq!(n, 7 * 350);
    assert!(s.imu.iter().all(|v| v.len() == n));
    assert_eq!(s.dorsal.len(), n);
    // glove clock runs 25 ms ahead of the server
    assert_eq!(s.imu[3][10].timestamp_ns, s.trajectory.frames[10].timestamp_ns + 25_000_000);
    assert_eq!(s.dorsal[10].timestamp_ns, s.trajectory.frames[10].timestamp_ns);
    assert_eq!(s.markers.len(), 14);
    assert_eq!(s.markers[1].kind, SegmentKind::Rest);
    assert_eq!(s.markers[13].kind, SegmentKind::Pinch(Finger::Little));
    assert!(!s.probes.is_empty());
    for p in &s.probes {
        let o = estimate_clock_offset(p.t1, p.t2, p.t3, p.t4).unwrap();
        // server = glove - 25 ms; the asymmetric legs bias it by at most 1 ms
        assert!((o.offset_ns + 25_000_000).abs() <= 1_000_000, "{o:?}");
    }
    let again = simulate(&sc, model()).unwrap();
    assert_eq!(again.imu, s.imu);
    assert_eq!(again.trajectory, s.trajectory);
}

#[test]
fn scenario_json_and_validation() {
    for name in Scenario::preset_names() {
        let sc = Scenario::preset(name).unwrap();
        sc.validate().unwrap();
        let text = serde_json::to_string(&sc).unwrap();
        assert_eq!(serde_json::from_str::<Scenario>(&text).unwrap(), sc);
    }
    let minimal = r#"{"schema_version": 1, "shape": "zero", "extrinsics": "identity",
                      "segments": [{"kind": "pinch_ring", "duration_s": 1.0}]}"#;
    let sc: Scenario = serde_json::from_str(minimal).unwrap();
    assert_eq!(sc.rate_hz, 100.0);
    assert_eq!(sc.segments[0].kind, SegmentKind::Pinch(Finger::Ring));
    let bad = |f: &dyn Fn(&mut Scenario)| {
        let mut s = sc.clone();
        f(&mut s);
        s.validate().is_err()
    };
    assert!(bad(&|s| s.schema_version = 2));
    assert!(bad(&|s| s.rate_hz = 0.0));
    assert!(bad(&|s| s.segments.clear()));
    assert!(bad(&|s| s.segments[0].duration_s = -1.0));
    assert!(bad(&|s| s.noise.sigma_static_deg = -0.1));
    assert!(bad(&|s| s.timing.jitter_ns = 6_000_000));
    assert!(bad(&|s| s.shape = ShapeSpec::Random { max_abs: 6.0 }));
    assert!(serde_json::from_str::<Scenario>(&minimal.replace("pinch_ring", "pinch_thumb")).is_err());
}
