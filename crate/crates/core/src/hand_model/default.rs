//! The built-in right-hand model shipped as `models/default_hand.json`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DVector, Matrix3xX, Vector3};

use super::pinch::{pinch_pose, refine_pinch};
use super::{
    CapsuleSpec, ContactPairTable, ContactPose, Finger, FingertipTable, HandModel, LinkDef, PoseParams,
    ShapeParams, SkeletonDef, DEFAULT_SHAPE_DIM,
};
use crate::so3::Rotation3;

/// Relative length change per unit of a length coefficient.
const LENGTH_GAIN: f64 = 0.08;

/// Shape coefficient layout of the default model.
pub mod coefficient {
    /// Whole-finger length, thumb last: index, middle, ring, little, thumb.
    pub const FINGER_LENGTH: [usize; 5] = [0, 1, 2, 3, 4];
    /// Proximal phalanx length of the four fingers.
    pub const PROXIMAL_LENGTH: usize = 5;
    /// Distal phalanx length of the four fingers.
    pub const DISTAL_LENGTH: usize = 6;
    pub const THUMB_PROXIMAL_LENGTH: usize = 7;
    /// Capsule thickness of palm, proximal and middle links.
    pub const THICKNESS: usize = 8;
    pub const THUMB_DISTAL_LENGTH: usize = 9;
}

struct FingerGeometry {
    finger: Finger,
    base: Vector3<f64>,
    direction: Vector3<f64>,
    lengths: [f64; 3],
    radii: [f64; 3],
}

fn finger_geometry() -> Vec<FingerGeometry> {
    let planar = |deg: f64| {
        let a = deg.to_radians();
        Vector3::new(a.cos(), a.sin(), 0.0)
    };
    let c45 = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        FingerGeometry {
            finger: Finger::Thumb,
            base: Vector3::new(24.0, 18.0, -14.0),
            direction: Vector3::new(c45, c45, -0.25).normalize(),
            lengths: [44.0, 34.0, 26.0],
            radii: [11.0, 10.0, 9.0],
        },
        FingerGeometry {
            finger: Finger::Index,
            base: Vector3::new(88.0, 24.0, 0.0),
            direction: planar(8.0),
            lengths: [42.0, 26.0, 21.0],
            radii: [9.5, 8.5, 8.0],
        },
        FingerGeometry {
            finger: Finger::Middle,
            base: Vector3::new(92.0, 4.0, 0.0),
            direction: planar(0.0),
            lengths: [46.0, 29.0, 22.0],
            radii: [10.0, 9.0, 8.5],
        },
        FingerGeometry {
            finger: Finger::Ring,
            base: Vector3::new(86.0, -15.0, 0.0),
            direction: planar(-8.0),
            lengths: [43.0, 27.0, 21.0],
            radii: [9.5, 8.5, 8.0],
        },
        FingerGeometry {
            finger: Finger::Little,
            base: Vector3::new(76.0, -32.0, 0.0),
            direction: planar(-16.0),
            lengths: [34.0, 21.0, 19.0],
            radii: [8.5, 7.5, 7.0],
        },
    ]
}

fn unit_coefficient(b: usize, gain: f64) -> DVector<f64> {
    let mut v = DVector::zeros(DEFAULT_SHAPE_DIM);
    v[b] = gain;
    v
}

/// Regressor scaling `offset` by `LENGTH_GAIN` per unit of each listed coefficient.
fn scaled(offset: &Vector3<f64>, coefficients: &[usize]) -> Matrix3xX<f64> {
    let mut m = Matrix3xX::zeros(DEFAULT_SHAPE_DIM);
    for &b in coefficients {
        m.set_column(b, &(offset * LENGTH_GAIN));
    }
    m
}

fn default_links() -> Vec<LinkDef> {
    use coefficient::*;
    let mut links = vec![LinkDef {
        name: "palm".into(),
        parent: None,
        rest_offset: Vector3::zeros(),
        offset_regressor: Matrix3xX::zeros(DEFAULT_SHAPE_DIM),
        radius: 24.0,
        radius_regressor: unit_coefficient(THICKNESS, 1.5),
        capsule: CapsuleSpec::Child(Finger::Middle.links()[0]),
    }];
    for g in finger_geometry() {
        let thumb = g.finger == Finger::Thumb;
        let whole = FINGER_LENGTH[if thumb { 4 } else { g.finger.ordinal() - 1 }];
        let proximal = if thumb { THUMB_PROXIMAL_LENGTH } else { PROXIMAL_LENGTH };
        let distal = if thumb { THUMB_DISTAL_LENGTH } else { DISTAL_LENGTH };
        let [p, m, d] = g.finger.links();
        let mid_offset = g.direction * g.lengths[0];
        let dist_offset = g.direction * g.lengths[1];
        let mut terminal_regressor = vec![0.0; DEFAULT_SHAPE_DIM];
        terminal_regressor[whole] = LENGTH_GAIN * g.lengths[2];
        terminal_regressor[distal] = LENGTH_GAIN * g.lengths[2];
        let name = g.finger.name();
        links.push(LinkDef {
            name: format!("{name}_proximal"),
            parent: Some(0),
            rest_offset: g.base,
            offset_regressor: Matrix3xX::zeros(DEFAULT_SHAPE_DIM),
            radius: g.radii[0],
            radius_regressor: unit_coefficient(THICKNESS, 0.8),
            capsule: CapsuleSpec::Child(m),
        });
        links.push(LinkDef {
            name: format!("{name}_middle"),
            parent: Some(p),
            rest_offset: mid_offset,
            offset_regressor: scaled(&mid_offset, &[whole, proximal]),
            radius: g.radii[1],
            radius_regressor: unit_coefficient(THICKNESS, 0.6),
            capsule: CapsuleSpec::Child(d),
        });
        links.push(LinkDef {
            name: format!("{name}_distal"),
            parent: Some(m),
            rest_offset: dist_offset,
            offset_regressor: scaled(&dist_offset, &[whole]),
            radius: g.radii[2],
            radius_regressor: DVector::zeros(DEFAULT_SHAPE_DIM),
            capsule: CapsuleSpec::Terminal {
                axis: g.direction,
                length: g.lengths[2],
                length_regressor: terminal_regressor,
            },
        });
    }
    links
}

/// Starting angles (finger curl, thumb swing, thumb curl) in degrees for each
/// pinch, chosen on the natural branch of solutions.
fn pinch_seed(finger: Finger) -> [f64; 3] {
    match finger {
        Finger::Index => [48.0, -64.0, 42.0],
        Finger::Middle => [55.0, -93.0, 55.0],
        Finger::Ring => [51.0, -98.0, 45.0],
        Finger::Little => [41.0, -94.0, 23.0],
        Finger::Thumb => unreachable!("the thumb does not pinch itself"),
    }
}

fn reference_pose(name: &str, root: Rotation3) -> ContactPose {
    ContactPose {
        name: name.into(),
        group: "reference".into(),
        finger: None,
        pose: PoseParams { root_rotation: root, ..PoseParams::identity() },
        pairs: Vec::new(),
    }
}

/// Builds the default model from its geometric description. Pinch presets are
/// solved at β = 0 so that each contact pair touches exactly.
pub fn default_model() -> HandModel {
    let skeleton = SkeletonDef::new(default_links(), DEFAULT_SHAPE_DIM).expect("default skeleton is valid");
    let tips = FingertipTable::distal_poles();
    let beta = ShapeParams::zeros(DEFAULT_SHAPE_DIM);
    let x_rot = Rotation3::about_x(-FRAC_PI_2);
    let mut poses = vec![
        reference_pose("rest", Rotation3::identity()),
        reference_pose("x_rot", x_rot),
        reference_pose("y_rot", Rotation3::about_y(FRAC_PI_2) * x_rot),
    ];
    for finger in Finger::OPPOSING {
        let [a, s, k] = pinch_seed(finger).map(f64::to_radians);
        let pair = (tips.vertex(Finger::Thumb), tips.vertex(finger));
        let seed = pinch_pose(&skeleton, finger, a, s, k);
        let (pose, gap) = refine_pinch(&skeleton, &beta, &seed, finger, pair).expect("indices are valid");
        debug_assert!(gap < 1e-6, "pinch preset for {} misses by {gap} mm", finger.name());
        poses.push(ContactPose {
            name: format!("pinch_{}", finger.name()),
            group: "pinch".into(),
            finger: Some(finger),
            pose,
            pairs: vec![pair],
        });
    }
    HandModel::new("default_right_hand", false, skeleton, ContactPairTable { poses }, tips)
        .expect("default model is valid")
}
