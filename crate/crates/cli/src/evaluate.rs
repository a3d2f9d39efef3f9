//! Reports comparing a reconstructed recording with its answer key.

use std::path::Path;

use handcal::acquisition::FrameSet;
use handcal::diffhcal::SessionCalibration;
use handcal::glove_sim::{hinge_angle, hinge_axis, SegmentKind, TrajectoryFrame, HINGE_LINK};
use handcal::hand_model::{Finger, HandModel, PoseParams, ShapeParams};
use handcal::metrics::{
    drift_report, joint_error_stats, pinch_report, shape_error, synthetic_partial_cloud,
    DriftReport, JointErrorStats, MeshBvh, MetricsError, PinchReport, ShapeError, TriangleMesh,
};
use handcal::so3::Rotation3;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::session::{AnswerKey, SCHEMA_VERSION};

/// Per-axis noise of the synthetic depth points, mm.
const CLOUD_NOISE_MM: f64 = 0.5;

/// A reconstructed frame next to the trajectory frame it came from.
pub struct Matched<'a> {
    pub frame: &'a FrameSet,
    pub pose: &'a PoseParams,
    pub truth: &'a TrajectoryFrame,
}

pub struct Inputs<'a> {
    pub model: &'a HandModel,
    pub key: &'a AnswerKey,
    pub calibration: &'a SessionCalibration,
    pub matched: Vec<Matched<'a>>,
}

impl<'a> Inputs<'a> {
    pub fn new(
        model: &'a HandModel,
        key: &'a AnswerKey,
        calibration: &'a SessionCalibration,
        frames: &'a [FrameSet],
        poses: &'a [PoseParams],
    ) -> Self {
        let matched = frames
            .iter()
            .zip(poses)
            .filter_map(|(frame, pose)| {
                key.frame_at(frame.timestamp_ns)
                    .map(|truth| Matched { frame, pose, truth })
            })
            .collect();
        Self {
            model,
            key,
            calibration,
            matched,
        }
    }

    fn beta(&self) -> ShapeParams {
        self.calibration.beta(self.model)
    }

    /// Matched frames whose truth lies inside segments of `kind`; the
    /// `index`-th such segment only when given.
    fn in_segment(&self, kind: SegmentKind, index: Option<usize>) -> Vec<&Matched<'a>> {
        let segments: Vec<_> = self
            .key
            .trajectory
            .segments
            .iter()
            .filter(|s| s.kind == kind)
            .collect();
        let chosen: Vec<_> = match index {
            Some(i) => segments.get(i).into_iter().copied().collect(),
            None => segments,
        };
        self.matched
            .iter()
            .filter(|m| chosen.iter().any(|s| s.contains(m.truth.timestamp_ns)))
            .collect()
    }
}

fn metric(e: MetricsError) -> CliError {
    CliError::data(e.to_string())
}

fn report(kind: &str, body: Value) -> Value {
    let mut doc = json!({ "schema_version": SCHEMA_VERSION, "kind": kind });
    if let (Some(d), Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    doc
}

#[derive(Serialize)]
struct JointReport {
    frames: usize,
    stats: JointErrorStats,
}

/// Hinge-segment joint angles against the swept reference.
pub fn joint(inputs: &Inputs) -> CliResult<Value> {
    let axis = hinge_axis(inputs.model);
    let frames = inputs.in_segment(SegmentKind::Hinge, None);
    if frames.is_empty() {
        return Err(CliError::data("recording has no hinge segment"));
    }
    let angle =
        |p: &PoseParams| hinge_angle(&p.link_local_rotation(HINGE_LINK), &axis).to_degrees();
    let measured: Vec<f64> = frames.iter().map(|m| angle(m.pose)).collect();
    let reference: Vec<f64> = frames.iter().map(|m| angle(&m.truth.pose)).collect();
    let stats = joint_error_stats(&measured, &reference).map_err(metric)?;
    let body = JointReport {
        frames: frames.len(),
        stats,
    };
    Ok(report(
        "joint",
        serde_json::to_value(body).expect("serializable"),
    ))
}

#[derive(Serialize)]
struct PoseShape {
    segment: String,
    timestamp_ns: u64,
    points: usize,
    #[serde(flatten)]
    error: ShapeError,
}

/// Partial clouds of the true mesh, one per held segment, scored against the
/// reconstructed mesh. The camera direction is drawn from `seed`.
pub fn shape(inputs: &Inputs, seed: u64) -> CliResult<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = inputs.beta();
    let mut poses = Vec::new();
    for seg in inputs
        .key
        .trajectory
        .segments
        .iter()
        .filter(|s| s.kind != SegmentKind::Transition)
    {
        let mid = seg.start_ns + (seg.end_ns - seg.start_ns) / 2;
        let Some(m) = inputs
            .matched
            .iter()
            .filter(|m| seg.contains(m.truth.timestamp_ns))
            .min_by_key(|m| m.truth.timestamp_ns.abs_diff(mid))
        else {
            continue;
        };
        let truth_mesh = inputs
            .model
            .build_mesh(&inputs.key.beta, &m.truth.pose)
            .map_err(|e| CliError::data(e.to_string()))?;
        let view = loop {
            let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            if (1e-3..=1.0).contains(&v.norm_squared()) {
                break v;
            }
        };
        let cloud = synthetic_partial_cloud(&truth_mesh, &view, CLOUD_NOISE_MM, &mut rng)
            .map_err(metric)?;
        let ours = inputs
            .model
            .build_mesh(&beta, m.pose)
            .map_err(|e| CliError::data(e.to_string()))?;
        poses.push(PoseShape {
            segment: seg.kind.name(),
            timestamp_ns: m.frame.timestamp_ns,
            points: cloud.len(),
            error: shape_error(&cloud, &ours.vertices).map_err(metric)?,
        });
    }
    if poses.is_empty() {
        return Err(CliError::data("no held segments to evaluate"));
    }
    let mean_rms = poses.iter().map(|p| p.error.rms_mm).sum::<f64>() / poses.len() as f64;
    let mean_e_sr = poses.iter().map(|p| p.error.e_sr_mm2).sum::<f64>() / poses.len() as f64;
    Ok(report(
        "shape",
        json!({ "seed": seed, "noise_mm": CLOUD_NOISE_MM, "mean_e_sr_mm2": mean_e_sr, "mean_rms_mm": mean_rms, "poses": poses }),
    ))
}

/// Thumb-to-finger distance over the last pinch segment of each finger.
pub fn pinch(inputs: &Inputs) -> CliResult<Value> {
    let mut streams = Vec::new();
    for f in Finger::OPPOSING {
        let kind = SegmentKind::Pinch(f);
        let count = inputs
            .key
            .trajectory
            .segments
            .iter()
            .filter(|s| s.kind == kind)
            .count();
        if count == 0 {
            continue;
        }
        let poses: Vec<PoseParams> = inputs
            .in_segment(kind, Some(count - 1))
            .iter()
            .map(|m| m.pose.clone())
            .collect();
        streams.push((f, poses));
    }
    if streams.is_empty() {
        return Err(CliError::data("recording has no pinch segments"));
    }
    let report_body: PinchReport =
        pinch_report(inputs.model, &inputs.beta(), &streams).map_err(metric)?;
    Ok(report(
        "pinch",
        serde_json::to_value(report_body).expect("serializable"),
    ))
}

#[derive(Serialize)]
struct FingerContact {
    finger: Finger,
    mean_distance_mm: f64,
    min_distance_mm: f64,
    mean_true_distance_mm: f64,
    /// Mean |reconstructed − true| distance.
    mean_abs_error_mm: f64,
}

#[derive(Serialize)]
struct ContactFrame {
    timestamp_ns: u64,
    /// Thumb to little finger.
    distance_mm: [f64; 5],
}

/// Fingertip-to-object distances per frame, reconstructed and true.
pub fn interaction(inputs: &Inputs, object: TriangleMesh) -> CliResult<Value> {
    if inputs.matched.is_empty() {
        return Err(CliError::data("no frames to evaluate"));
    }
    let bvh = MeshBvh::new(object);
    let beta = inputs.beta();
    let tip = |b: &ShapeParams, pose: &PoseParams, f: Finger| {
        inputs
            .model
            .fingertip_position(b, pose, f)
            .map_err(|e| CliError::data(e.to_string()))
    };
    let mut series = Vec::with_capacity(inputs.matched.len());
    let mut sums = [(0.0f64, f64::INFINITY, 0.0f64, 0.0f64); 5];
    for m in &inputs.matched {
        let mut distance_mm = [0.0; 5];
        for f in Finger::ALL {
            let ours = bvh.query(&tip(&beta, m.pose, f)?).distance;
            let truth = bvh
                .query(&tip(&inputs.key.beta, &m.truth.pose, f)?)
                .distance;
            let s = &mut sums[f.ordinal()];
            s.0 += ours;
            s.1 = s.1.min(ours);
            s.2 += truth;
            s.3 += (ours - truth).abs();
            distance_mm[f.ordinal()] = ours;
        }
        series.push(ContactFrame {
            timestamp_ns: m.frame.timestamp_ns,
            distance_mm,
        });
    }
    let n = inputs.matched.len() as f64;
    let fingers: Vec<FingerContact> = Finger::ALL
        .iter()
        .map(|&f| {
            let s = sums[f.ordinal()];
            FingerContact {
                finger: f,
                mean_distance_mm: s.0 / n,
                min_distance_mm: s.1,
                mean_true_distance_mm: s.2 / n,
                mean_abs_error_mm: s.3 / n,
            }
        })
        .collect();
    Ok(report(
        "interaction",
        json!({ "frames": series.len(), "fingers": fingers, "series": series }),
    ))
}

/// Calibrated sensor orientations against the true link orientations over
/// every hold segment, binned by minute.
pub fn drift(inputs: &Inputs) -> CliResult<Value> {
    // a long hold isolates drift; without one every frame is used
    let mut frames = inputs.in_segment(SegmentKind::Hold, None);
    let source = if frames.is_empty() {
        frames = inputs.matched.iter().collect();
        "all"
    } else {
        "hold"
    };
    if frames.is_empty() {
        return Err(CliError::data("no frames match the answer key"));
    }
    let alignment = &inputs.calibration.alignment;
    let (mut t, mut measured, mut truth): (Vec<u64>, Vec<Rotation3>, Vec<Rotation3>) =
        Default::default();
    for m in frames {
        let links = inputs.model.link_rotations(&m.truth.pose);
        for (i, link) in links.into_iter().enumerate() {
            t.push(m.frame.timestamp_ns);
            measured.push(alignment.link_rotation(i, &m.frame.imu[i].orientation.to_rotation()));
            truth.push(link);
        }
    }
    let drift: DriftReport = drift_report(&t, &measured, &truth).map_err(metric)?;
    let final_error = drift.final_error_deg();
    Ok(report(
        "drift",
        json!({ "frames": source, "sensors": inputs.model.skeleton().links().len(), "final_error_deg": final_error, "report": drift }),
    ))
}

/// Triangles of an OBJ file; polygons are fanned, normals and texture
/// coordinates ignored.
pub fn load_obj(path: &Path) -> CliResult<TriangleMesh> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let bad =
        |line: usize, what: &str| CliError::config(format!("{}:{line}: {what}", path.display()));
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut faces = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let xyz: Vec<f64> = words
                    .take(3)
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad(k + 1, "bad vertex"))?;
                if xyz.len() != 3 {
                    return Err(bad(k + 1, "vertex needs three coordinates"));
                }
                vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for w in words {
                    let i: i64 = w
                        .split('/')
                        .next()
                        .unwrap_or("")
                        .parse()
                        .map_err(|_| bad(k + 1, "bad face index"))?;
                    // negative indices count back from the latest vertex
                    let i = if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        i - 1
                    };
                    if i < 0 || i >= vertices.len() as i64 {
                        return Err(bad(k + 1, "face index out of range"));
                    }
                    idx.push(i as u32);
                }
                if idx.len() < 3 {
                    return Err(bad(k + 1, "face needs three vertices"));
                }
                faces.extend((1..idx.len() - 1).map(|j| [idx[0], idx[j], idx[j + 1]]));
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
