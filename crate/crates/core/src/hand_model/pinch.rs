//! Pinch poses: thumb tip brought onto a finger tip.
//!
//! A pinch is parameterized by three angles. The finger curls about its
//! flexion axis (proximal, middle and distal joints in fixed proportion),
//! the thumb swings about the palm normal and curls about its own flexion
//! axis. [`refine_pinch`] adjusts those angles, plus a small finger
//! abduction, on top of an existing pose so that one contact pair coincides
//! for a given β. Three equations in four unknowns: each step is the
//! damped minimum-norm update, which keeps the pose close to the preset.

use nalgebra::{Matrix3, SMatrix, Vector3, Vector4};

use super::{Finger, ModelError, PoseParams, ShapeParams, SkeletonDef};
use crate::so3::Rotation3;

const FINGER_CURL_WEIGHTS: [f64; 3] = [1.0, 0.9, 0.45];
const THUMB_CURL_WEIGHTS: [f64; 3] = [0.3, 0.6, 0.5];
/// Pronation of the thumb about its own axis in every pinch.
const THUMB_TWIST: f64 = 0.6;

/// Flexion axis of a finger in its proximal link frame: palm normal × finger direction.
pub fn flexion_axis(skeleton: &SkeletonDef, finger: Finger) -> Vector3<f64> {
    let [_, mid, _] = finger.links();
    let dir = skeleton.links()[mid].rest_offset.normalize();
    Vector3::z().cross(&dir).normalize()
}

fn finger_direction(skeleton: &SkeletonDef, finger: Finger) -> Vector3<f64> {
    skeleton.links()[finger.links()[1]].rest_offset.normalize()
}

/// Pose with `finger` curled by `curl` and the thumb at swing `swing`, curl `thumb_curl` (radians).
pub fn pinch_pose(skeleton: &SkeletonDef, finger: Finger, curl: f64, swing: f64, thumb_curl: f64) -> PoseParams {
    let mut pose = PoseParams::identity();
    let axis = flexion_axis(skeleton, finger);
    for (link, w) in finger.links().into_iter().zip(FINGER_CURL_WEIGHTS) {
        pose.set_link_local_rotation(link, Rotation3::from_axis_angle(&axis, w * curl));
    }
    let t_axis = flexion_axis(skeleton, Finger::Thumb);
    let t_dir = finger_direction(skeleton, Finger::Thumb);
    let [tp, tm, td] = Finger::Thumb.links();
    let z = Vector3::z();
    pose.set_link_local_rotation(
        tp,
        Rotation3::from_axis_angle(&z, swing)
            * Rotation3::from_axis_angle(&t_dir, THUMB_TWIST)
            * Rotation3::from_axis_angle(&t_axis, THUMB_CURL_WEIGHTS[0] * thumb_curl),
    );
    pose.set_link_local_rotation(tm, Rotation3::from_axis_angle(&t_axis, THUMB_CURL_WEIGHTS[1] * thumb_curl));
    pose.set_link_local_rotation(td, Rotation3::from_axis_angle(&t_axis, THUMB_CURL_WEIGHTS[2] * thumb_curl));
    pose
}

/// Applies angle increments (finger curl, thumb swing, thumb curl, finger
/// abduction) to a pose.
fn perturb(skeleton: &SkeletonDef, base: &PoseParams, finger: Finger, delta: &Vector4<f64>) -> PoseParams {
    let mut pose = base.clone();
    let axis = flexion_axis(skeleton, finger);
    for (n, (link, w)) in finger.links().into_iter().zip(FINGER_CURL_WEIGHTS).enumerate() {
        let mut r = base.link_local_rotation(link) * Rotation3::from_axis_angle(&axis, w * delta[0]);
        if n == 0 {
            r = Rotation3::about_z(delta[3]) * r;
        }
        pose.set_link_local_rotation(link, r);
    }
    let t_axis = flexion_axis(skeleton, Finger::Thumb);
    for (n, (link, w)) in Finger::Thumb.links().into_iter().zip(THUMB_CURL_WEIGHTS).enumerate() {
        let mut r = base.link_local_rotation(link) * Rotation3::from_axis_angle(&t_axis, w * delta[2]);
        if n == 0 {
            r = Rotation3::about_z(delta[1]) * r;
        }
        pose.set_link_local_rotation(link, r);
    }
    pose
}

/// Adjusts `base`, a pinch that touches at β = 0, so that vertices `pair.0`
/// and `pair.1` coincide under `beta`. The shape is walked from zero to
/// `beta` in small steps so the solution stays on the branch of `base`.
/// Returns the refined pose and the remaining gap in millimeters.
pub fn refine_pinch(
    skeleton: &SkeletonDef,
    beta: &ShapeParams,
    base: &PoseParams,
    finger: Finger,
    pair: (usize, usize),
) -> Result<(PoseParams, f64), ModelError> {
    const STEPS: usize = 8;
    let mut pose = base.clone();
    let mut gap = f64::INFINITY;
    for s in 1..=STEPS {
        let t = s as f64 / STEPS as f64;
        let partial = ShapeParams::clipped(beta.as_slice().iter().map(|b| b * t).collect());
        (pose, gap) = solve_contact(skeleton, &partial, &pose, finger, pair)?;
    }
    Ok((pose, gap))
}

fn solve_contact(
    skeleton: &SkeletonDef,
    beta: &ShapeParams,
    base: &PoseParams,
    finger: Finger,
    pair: (usize, usize),
) -> Result<(PoseParams, f64), ModelError> {
    let residual = |d: &Vector4<f64>| -> Result<Vector3<f64>, ModelError> {
        let pose = perturb(skeleton, base, finger, d);
        Ok(skeleton.vertex_position(beta, &pose, pair.0)? - skeleton.vertex_position(beta, &pose, pair.1)?)
    };
    let mut delta = Vector4::zeros();
    let mut r = residual(&delta)?;
    let mut lambda = 1e-3;
    for _ in 0..100 {
        if r.norm() < 1e-10 {
            break;
        }
        let h = 1e-7;
        let mut jac = SMatrix::<f64, 3, 4>::zeros();
        for c in 0..4 {
            let mut dp = delta;
            let mut dm = delta;
            dp[c] += h;
            dm[c] -= h;
            jac.set_column(c, &((residual(&dp)? - residual(&dm)?) / (2.0 * h)));
        }
        let jjt = jac * jac.transpose();
        let mut improved = false;
        for _ in 0..20 {
            let damped = jjt + Matrix3::identity() * (lambda * jjt.trace() / 3.0 + 1e-12);
            let Some(y) = damped.lu().solve(&(-r)) else { break };
            let cand = delta + jac.transpose() * y;
            let rc = residual(&cand)?;
            if rc.norm() < r.norm() {
                delta = cand;
                r = rc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok((perturb(skeleton, base, finger, &delta), r.norm()))
}
