use std::sync::OnceLock;

use handcal::acquisition::{ingest, session_packets, FrameSet, SyncConfig};
use handcal::diffhcal::*;
use handcal::glove_sim::{simulate, NoiseModel, Scenario, SimulatedSession};
use handcal::hand_model::*;
use handcal::so3::{geodesic_angle, random_rotation, random_rotation_within, Rotation3};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model() -> &'static HandModel {
    static M: OnceLock<HandModel> = OnceLock::new();
    M.get_or_init(default_model)
}

fn random_beta(rng: &mut impl Rng, max_abs: f64) -> ShapeParams {
    ShapeParams::clipped((0..model().shape_dim()).map(|_| rng.random_range(-max_abs..=max_abs)).collect())
}

fn random_pose(rng: &mut impl Rng) -> PoseParams {
    let mut pose = PoseParams::identity();
    pose.root_rotation = random_rotation(rng);
    pose.root_translation = Vector3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), 0.0);
    for r in pose.joint_rotations.iter_mut() {
        *r = random_rotation_within(rng, 1.0);
    }
    pose
}

/// Every pinch's contact pairs, posed at `pose` rather than at the pinch.
fn captures_at(pose: &PoseParams) -> Vec<PinchCapture> {
    Finger::OPPOSING
        .iter()
        .map(|&f| PinchCapture { finger: f, pose: pose.clone(), pairs: model().contacts().pinch(f).unwrap().pairs.clone() })
        .collect()
}

fn preset_captures() -> Vec<PinchCapture> {
    Finger::OPPOSING
        .iter()
        .map(|&f| {
            let p = model().contacts().pinch(f).unwrap();
            PinchCapture { finger: f, pose: p.pose.clone(), pairs: p.pairs.clone() }
        })
        .collect()
}

fn central_difference(beta: &ShapeParams, caps: &[PinchCapture], k: usize, h: f64) -> f64 {
    let mut plus = beta.as_slice().to_vec();
    let mut minus = plus.clone();
    plus[k] += h;
    minus[k] -= h;
    (shape_energy(model(), &ShapeParams::new(plus).unwrap(), caps).unwrap()
        - shape_energy(model(), &ShapeParams::new(minus).unwrap(), caps).unwrap())
        / (2.0 * h)
}

#[test]
fn shape_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for case in 0..100 {
        // stay inside the box so the ±h probes are not clipped
        let beta = random_beta(&mut rng, 4.5);
        let caps = captures_at(&random_pose(&mut rng));
        let g = shape_gradient(model(), &beta, &caps).unwrap();
        for k in 0..model().shape_dim() {
            let fd = central_difference(&beta, &caps, k, 1e-4);
            let rel = (fd - g[k]).abs() / g.norm().max(1e-12);
            assert!(rel < 1e-4, "case {case}, coefficient {k}: analytic {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn energy_trace_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..50 {
        let caps = if trial % 2 == 0 { captures_at(&random_pose(&mut rng)) } else { preset_captures() };
        let beta0 = random_beta(&mut rng, 5.0);
        let options = ShapeOptions { max_iterations: 100, ..ShapeOptions::default() };
        let r = calibrate_shape(model(), &caps, &beta0, &options).unwrap();
        for w in r.energy_trace.windows(2) {
            assert!(w[1] <= w[0], "trial {trial}: {} -> {}", w[0], w[1]);
        }
        assert!(r.energy_trace.len() <= r.iterations + 1);
        assert_eq!(*r.energy_trace.last().unwrap(), r.energy);
        assert!(r.beta.as_slice().iter().all(|b| b.abs() <= BETA_BOUND));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = random_beta(&mut rng, 5.0);
        let caps = captures_at(&random_pose(&mut rng));
        prop_assert!(shape_energy(model(), &beta, &caps).unwrap() >= 0.0);
    }

    #[test]
    fn energy_vanishes_when_pairs_touch(finger in 1usize..5) {
        // the preset pinches are solved at zero shape for exact contact
        let f = Finger::ALL[finger];
        let caps: Vec<_> = preset_captures().into_iter().filter(|c| c.finger == f).collect();
        prop_assert!(shape_energy(model(), &model().zero_shape(), &caps).unwrap() < 1e-18);
    }

    #[test]
    fn alignment_objective_is_monotone(seed in any::<u64>(), sigma in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_rotation_within(&mut rng, 0.5);
        let c: Vec<Rotation3> = (0..16).map(|_| random_rotation_within(&mut rng, 0.5)).collect();
        let refs = virtual_references(model());
        let captures: Vec<ReferenceCapture> = refs
            .iter()
            .map(|r| ReferenceCapture {
                kind: r.kind,
                orientations: (0..16)
                    .map(|i| {
                        let noise = random_rotation_within(&mut rng, sigma.to_radians());
                        (a.inverse() * r.link_rotations[i] * c[i] * noise).to_quaternion()
                    })
                    .collect(),
                sample_count: 1,
                spread_deg: vec![0.0; 16],
            })
            .collect();
        let result = solve_alignment(&captures, &refs).unwrap();
        for w in result.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
        prop_assert_eq!(&result, &solve_alignment(&captures, &refs).unwrap());
    }
}

fn run(seed: u64, noise: NoiseModel) -> (SimulatedSession, Vec<FrameSet>, SessionCalibration) {
    let mut scenario = Scenario::preset("session").unwrap();
    scenario.seed = seed;
    scenario.noise = noise;
    let session = simulate(&scenario, model()).unwrap();
    let out = ingest(&session_packets(&session), SyncConfig::default());
    let cal = calibrate_session(model(), &out.frames, &out.markers, &CalibrationOptions::default()).unwrap();
    (session, out.frames, cal)
}

/// Trajectory frame generating a synchronized frame; the frame time can be
/// off by the clock-correction error, well under one period.
fn truth_index(session: &SimulatedSession, t: u64) -> usize {
    let first = session.trajectory.frames[0].timestamp_ns as f64;
    ((t as f64 - first) / session.trajectory.period_ns() as f64).round() as usize
}

#[test]
fn zero_noise_pipeline_reproduces_trajectory() {
    let (session, frames, cal) = run(4, NoiseModel::noiseless());
    let poses = reconstruct_frames(model(), &frames, &cal).unwrap();
    let mut worst = 0.0f64;
    let mut worst_mm = 0.0f64;
    for (f, pose) in frames.iter().zip(&poses) {
        let truth = &session.trajectory.frames[truth_index(&session, f.timestamp_ns)].pose;
        worst = worst.max(geodesic_angle(&pose.root_rotation, &truth.root_rotation));
        for (a, b) in pose.joint_rotations.iter().zip(&truth.joint_rotations) {
            worst = worst.max(geodesic_angle(a, b));
        }
        worst_mm = worst_mm.max((pose.root_translation - truth.root_translation).norm());
    }
    // quaternions travel as f32, which bounds the agreement near 1e-7
    assert!(worst < 1e-6, "worst joint error {worst} rad");
    assert!(worst_mm < 1e-3, "worst root translation error {worst_mm} mm");
}

#[test]
fn noisy_pipeline_keeps_residuals_in_bound() {
    let (session, _, cal) = run(7, NoiseModel::default());
    assert!(cal.alignment.max_residual_deg() <= 2.7, "{}", cal.alignment.max_residual_deg());
    let mut worst = geodesic_angle(&cal.alignment.world_alignment, &session.extrinsics.world_alignment);
    for (c, t) in cal.alignment.installation.iter().zip(&session.extrinsics.installation) {
        worst = worst.max(geodesic_angle(c, t));
    }
    assert!(worst.to_degrees() <= 2.7);
}
