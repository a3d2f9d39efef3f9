//! Parametric hand model: pose and shape in, posed capsule mesh out.
//!
//! The skeleton has 16 links. Link 0 is the palm; links `1..16` are the
//! proximal, middle and distal phalanges of thumb, index, middle, ring and
//! little finger in that order. Every link carries a capsule whose geometry
//! is affine in the shape vector β, and links are posed rigidly, so each
//! vertex is an affine function of β for a fixed pose. That is what makes
//! [`SkeletonDef::vertex_jacobian_beta`] exact.
//!
//! Model frame convention: `x` points from the wrist toward the fingers,
//! `y` toward the thumb side, `z` out of the back of the hand. Lengths are
//! millimeters.

mod default;
mod file;
mod pinch;

use nalgebra::{DVector, Matrix3xX, Vector3};
use serde::{Deserialize, Serialize};

use crate::so3::Rotation3;

pub use default::default_model;
pub use file::{load_model, model_from_json, model_to_json, save_model, MODEL_SCHEMA_VERSION};
pub use pinch::{flexion_axis, pinch_pose, refine_pinch};

pub const NUM_LINKS: usize = 16;
pub const NUM_JOINTS: usize = 15;
pub const DEFAULT_SHAPE_DIM: usize = 10;
/// Box bound on every shape coefficient.
pub const BETA_BOUND: f64 = 5.0;

/// Rings along each capsule (two per cap, four on the cylinder).
pub const CAPSULE_RINGS: usize = 8;
/// Vertices per ring.
pub const CAPSULE_SEGMENTS: usize = 8;
pub const VERTICES_PER_CAPSULE: usize = CAPSULE_RINGS * CAPSULE_SEGMENTS + 2;
pub const FACES_PER_CAPSULE: usize = 2 * CAPSULE_SEGMENTS * (CAPSULE_RINGS - 1) + 2 * CAPSULE_SEGMENTS;
/// Local index of the pole at the far end of a capsule.
pub const END_POLE: usize = VERTICES_PER_CAPSULE - 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("model violates schema: {0}")]
    Schema(String),
    #[error("unsupported model schema version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("shape vector has {got} coefficients, model expects {expected}")]
    ShapeDimension { expected: usize, got: usize },
    #[error("shape coefficient {index} = {value} outside [-{BETA_BOUND}, {BETA_BOUND}]")]
    BetaOutOfBounds { index: usize, value: f64 },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [Finger::Thumb, Finger::Index, Finger::Middle, Finger::Ring, Finger::Little];
    /// The four fingers that pinch against the thumb.
    pub const OPPOSING: [Finger; 4] = [Finger::Index, Finger::Middle, Finger::Ring, Finger::Little];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Proximal, middle and distal link ids.
    pub fn links(self) -> [usize; 3] {
        let b = 1 + 3 * self.ordinal();
        [b, b + 1, b + 2]
    }

    pub fn distal_link(self) -> usize {
        self.links()[2]
    }

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }

    pub fn from_name(name: &str) -> Option<Finger> {
        Finger::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Shape coefficients β, each within `±BETA_BOUND`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ShapeParams(Vec<f64>);

impl ShapeParams {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value.abs() > BETA_BOUND {
                return Err(ModelError::BetaOutOfBounds { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Clips every coefficient into the box.
    pub fn clipped(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v.clamp(-BETA_BOUND, BETA_BOUND)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl<'de> Deserialize<'de> for ShapeParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        ShapeParams::new(v).map_err(serde::de::Error::custom)
    }
}

pub(crate) mod serde_vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}

/// Pose θ: root rotation and translation plus 15 parent-local joint rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub root_rotation: Rotation3,
    #[serde(with = "serde_vec3")]
    pub root_translation: Vector3<f64>,
    pub joint_rotations: [Rotation3; NUM_JOINTS],
}

impl Default for PoseParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseParams {
    pub fn identity() -> Self {
        Self {
            root_rotation: Rotation3::identity(),
            root_translation: Vector3::zeros(),
            joint_rotations: [Rotation3::identity(); NUM_JOINTS],
        }
    }

    /// Rotation applied at `link` (root rotation for link 0).
    pub fn link_local_rotation(&self, link: usize) -> Rotation3 {
        if link == 0 {
            self.root_rotation
        } else {
            self.joint_rotations[link - 1]
        }
    }

    pub fn set_link_local_rotation(&mut self, link: usize, r: Rotation3) {
        if link == 0 {
            self.root_rotation = r;
        } else {
            self.joint_rotations[link - 1] = r;
        }
    }

    /// Per-link slerp between two poses (translation interpolated linearly).
    pub fn interpolate(&self, other: &PoseParams, t: f64) -> PoseParams {
        let mut out = self.clone();
        out.root_rotation = self.root_rotation.slerp(&other.root_rotation, t);
        out.root_translation = self.root_translation + (other.root_translation - self.root_translation) * t;
        for (o, (a, b)) in out
            .joint_rotations
            .iter_mut()
            .zip(self.joint_rotations.iter().zip(&other.joint_rotations))
        {
            *o = a.slerp(b, t);
        }
        out
    }
}

/// Where a link's capsule ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapsuleSpec {
    /// The capsule runs to the origin of the given child link.
    Child(usize),
    /// Free end: `axis * (length + length_regressor · β)` in the link frame.
    Terminal {
        #[serde(with = "serde_vec3")]
        axis: Vector3<f64>,
        length: f64,
        length_regressor: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDef {
    pub name: String,
    pub parent: Option<usize>,
    /// Rest offset from the parent origin, in the parent frame.
    pub rest_offset: Vector3<f64>,
    /// 3×B: millimeters of offset per unit β.
    pub offset_regressor: Matrix3xX<f64>,
    pub radius: f64,
    pub radius_regressor: DVector<f64>,
    pub capsule: CapsuleSpec,
}

impl LinkDef {
    pub fn offset(&self, beta: &[f64]) -> Vector3<f64> {
        let mut o = self.rest_offset;
        for (b, &coef) in beta.iter().enumerate() {
            o += self.offset_regressor.column(b) * coef;
        }
        o
    }

    pub fn radius_at(&self, beta: &[f64]) -> f64 {
        self.radius + self.radius_regressor.iter().zip(beta).map(|(g, b)| g * b).sum::<f64>()
    }
}

/// World transform of one link: `x_world = rotation * x_link + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTransform {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl LinkTransform {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub vertex_link: Vec<u8>,
}

impl HandMesh {
    /// ASCII OBJ, millimeters, 1-based face indices.
    pub fn to_obj(&self) -> String {
        use std::fmt::Write;
        let mut s = String::with_capacity(self.vertices.len() * 40 + self.faces.len() * 20);
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }
}

/// A capsule vertex in link coordinates: `axis_weight * end(β) + radius(β) * direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TemplateVertex {
    axis_weight: f64,
    direction: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonDef {
    links: Vec<LinkDef>,
    shape_dim: usize,
    templates: Vec<[TemplateVertex; VERTICES_PER_CAPSULE]>,
}

impl SkeletonDef {
    /// Validates topology and geometry over the whole β box.
    pub fn new(links: Vec<LinkDef>, shape_dim: usize) -> Result<Self, ModelError> {
        validate_links(&links, shape_dim)?;
        let templates = links.iter().map(|l| capsule_template(&links, l)).collect();
        Ok(Self { links, shape_dim, templates })
    }

    pub fn links(&self) -> &[LinkDef] {
        &self.links
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_dim
    }

    pub fn vertex_count(&self) -> usize {
        self.links.len() * VERTICES_PER_CAPSULE
    }

    pub fn check_beta(&self, beta: &ShapeParams) -> Result<(), ModelError> {
        if beta.len() != self.shape_dim {
            return Err(ModelError::ShapeDimension { expected: self.shape_dim, got: beta.len() });
        }
        Ok(())
    }

    /// Capsule end point in link coordinates, and its β-Jacobian (3×B).
    fn capsule_end(&self, link: usize, beta: &[f64]) -> Vector3<f64> {
        match &self.links[link].capsule {
            CapsuleSpec::Child(c) => self.links[*c].offset(beta),
            CapsuleSpec::Terminal { axis, length, length_regressor } => {
                let l = length + length_regressor.iter().zip(beta).map(|(s, b)| s * b).sum::<f64>();
                axis * l
            }
        }
    }

    fn capsule_end_jacobian(&self, link: usize) -> Matrix3xX<f64> {
        match &self.links[link].capsule {
            CapsuleSpec::Child(c) => self.links[*c].offset_regressor.clone(),
            CapsuleSpec::Terminal { axis, length_regressor, .. } => {
                Matrix3xX::from_fn(self.shape_dim, |r, b| axis[r] * length_regressor[b])
            }
        }
    }

    /// World transforms of all links.
    pub fn forward_kinematics(
        &self,
        beta: &ShapeParams,
        pose: &PoseParams,
    ) -> Result<Vec<LinkTransform>, ModelError> {
        self.check_beta(beta)?;
        let b = beta.as_slice();
        let mut out: Vec<LinkTransform> = Vec::with_capacity(self.links.len());
        for (i, link) in self.links.iter().enumerate() {
            let t = match link.parent {
                None => LinkTransform {
                    rotation: pose.root_rotation,
                    translation: pose.root_translation + pose.root_rotation * link.offset(b),
                },
                Some(p) => {
                    let parent = out[p];
                    LinkTransform {
                        rotation: parent.rotation * pose.link_local_rotation(i),
                        translation: parent.translation + parent.rotation * link.offset(b),
                    }
                }
            };
            out.push(t);
        }
        Ok(out)
    }

    fn chain_to_root(&self, link: usize) -> Vec<usize> {
        let mut chain = vec![link];
        let mut cur = link;
        while let Some(p) = self.links[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    /// Transform of a single link, walking only its own chain.
    pub fn link_transform(
        &self,
        beta: &ShapeParams,
        pose: &PoseParams,
        link: usize,
    ) -> Result<LinkTransform, ModelError> {
        self.check_beta(beta)?;
        if link >= self.links.len() {
            return Err(ModelError::IndexOutOfRange { index: link, len: self.links.len() });
        }
        let b = beta.as_slice();
        let mut t: Option<LinkTransform> = None;
        for i in self.chain_to_root(link) {
            let l = &self.links[i];
            t = Some(match t {
                None => LinkTransform {
                    rotation: pose.root_rotation,
                    translation: pose.root_translation + pose.root_rotation * l.offset(b),
                },
                Some(parent) => LinkTransform {
                    rotation: parent.rotation * pose.link_local_rotation(i),
                    translation: parent.translation + parent.rotation * l.offset(b),
                },
            });
        }
        Ok(t.expect("chain is never empty"))
    }

    fn local_vertex(&self, link: usize, local: usize, beta: &[f64]) -> Vector3<f64> {
        let tv = &self.templates[link][local];
        let end = self.capsule_end(link, beta);
        end * tv.axis_weight + tv.direction * self.links[link].radius_at(beta)
    }

    pub fn build_mesh(&self, beta: &ShapeParams, pose: &PoseParams) -> Result<HandMesh, ModelError> {
        let transforms = self.forward_kinematics(beta, pose)?;
        let b = beta.as_slice();
        let mut vertices = Vec::with_capacity(self.vertex_count());
        for (link, t) in transforms.iter().enumerate() {
            for local in 0..VERTICES_PER_CAPSULE {
                vertices.push(t.apply(&self.local_vertex(link, local, b)));
            }
        }
        Ok(HandMesh { vertices, faces: self.faces(), vertex_link: self.vertex_links() })
    }

    /// Face list; identical for every (θ, β).
    pub fn faces(&self) -> Vec<[u32; 3]> {
        let mut faces = Vec::with_capacity(self.links.len() * FACES_PER_CAPSULE);
        for link in 0..self.links.len() {
            let base = (link * VERTICES_PER_CAPSULE) as u32;
            let ring = |r: usize, k: usize| base + 1 + (r * CAPSULE_SEGMENTS + k % CAPSULE_SEGMENTS) as u32;
            let start = base;
            let end = base + END_POLE as u32;
            for k in 0..CAPSULE_SEGMENTS {
                faces.push([start, ring(0, k + 1), ring(0, k)]);
            }
            for r in 0..CAPSULE_RINGS - 1 {
                for k in 0..CAPSULE_SEGMENTS {
                    let (a, b, c, d) = (ring(r, k), ring(r, k + 1), ring(r + 1, k + 1), ring(r + 1, k));
                    faces.push([a, b, c]);
                    faces.push([a, c, d]);
                }
            }
            for k in 0..CAPSULE_SEGMENTS {
                faces.push([ring(CAPSULE_RINGS - 1, k), ring(CAPSULE_RINGS - 1, k + 1), end]);
            }
        }
        faces
    }

    pub fn vertex_links(&self) -> Vec<u8> {
        (0..self.vertex_count()).map(|v| (v / VERTICES_PER_CAPSULE) as u8).collect()
    }

    fn split_index(&self, vertex: usize) -> Result<(usize, usize), ModelError> {
        if vertex >= self.vertex_count() {
            return Err(ModelError::IndexOutOfRange { index: vertex, len: self.vertex_count() });
        }
        Ok((vertex / VERTICES_PER_CAPSULE, vertex % VERTICES_PER_CAPSULE))
    }

    pub fn vertex_position(
        &self,
        beta: &ShapeParams,
        pose: &PoseParams,
        vertex: usize,
    ) -> Result<Vector3<f64>, ModelError> {
        let (link, local) = self.split_index(vertex)?;
        let t = self.link_transform(beta, pose, link)?;
        Ok(t.apply(&self.local_vertex(link, local, beta.as_slice())))
    }

    /// ∂v/∂β (3×B). Pose fixed, so link rotations are constant and link
    /// origins are affine in β; the chain rule reduces to summing rotated
    /// regressors.
    pub fn vertex_jacobian_beta(
        &self,
        beta: &ShapeParams,
        pose: &PoseParams,
        vertex: usize,
    ) -> Result<Matrix3xX<f64>, ModelError> {
        let (link, local) = self.split_index(vertex)?;
        self.check_beta(beta)?;
        let chain = self.chain_to_root(link);
        let mut jac = Matrix3xX::<f64>::zeros(self.shape_dim);
        let mut rotation = Rotation3::identity();
        for (n, &i) in chain.iter().enumerate() {
            // offset of link i is expressed in its parent's frame (root frame for link 0)
            let parent_rot = if n == 0 { pose.root_rotation } else { rotation };
            jac += parent_rot.matrix() * &self.links[i].offset_regressor;
            rotation = if n == 0 { pose.root_rotation } else { rotation * pose.link_local_rotation(i) };
        }
        let tv = &self.templates[link][local];
        let mut local_jac = self.capsule_end_jacobian(link) * tv.axis_weight;
        for b in 0..self.shape_dim {
            let g = self.links[link].radius_regressor[b];
            for r in 0..3 {
                local_jac[(r, b)] += tv.direction[r] * g;
            }
        }
        jac += rotation.matrix() * local_jac;
        Ok(jac)
    }
}

fn validate_links(links: &[LinkDef], shape_dim: usize) -> Result<(), ModelError> {
    let schema = |m: String| Err(ModelError::Schema(m));
    if links.len() != NUM_LINKS {
        return schema(format!("expected {NUM_LINKS} links, found {}", links.len()));
    }
    if shape_dim == 0 {
        return schema("shape_dim must be positive".into());
    }
    for (i, l) in links.iter().enumerate() {
        match (i, l.parent) {
            (0, None) => {}
            (0, Some(_)) => return schema("link 0 must not have a parent".into()),
            (_, None) => return schema(format!("link {i} has no parent")),
            (_, Some(p)) if p >= i => {
                return schema(format!("link {i} has parent {p}; parents must precede children"))
            }
            _ => {}
        }
        if l.offset_regressor.ncols() != shape_dim || l.radius_regressor.len() != shape_dim {
            return schema(format!("link {i} regressors do not have {shape_dim} columns"));
        }
        let all_finite = l.rest_offset.iter().chain(l.offset_regressor.iter()).chain(l.radius_regressor.iter()).all(|v| v.is_finite())
            && l.radius.is_finite();
        if !all_finite {
            return schema(format!("link {i} has non-finite values"));
        }
        if i > 0 && l.rest_offset.norm() == 0.0 {
            return schema(format!("link {i} has a zero rest offset"));
        }
        // interval arithmetic over |β_b| <= BETA_BOUND
        let r_min = l.radius - BETA_BOUND * l.radius_regressor.iter().map(|g| g.abs()).sum::<f64>();
        if r_min <= 0.0 {
            return schema(format!("link {i} radius can reach {r_min} inside the shape box"));
        }
        if i > 0 && !offset_bounded_away_from_zero(&l.rest_offset, &l.offset_regressor) {
            return schema(format!("link {i} bone length can vanish inside the shape box"));
        }
        match &l.capsule {
            CapsuleSpec::Child(c) => {
                if *c >= links.len() || links[*c].parent != Some(i) {
                    return schema(format!("link {i} capsule targets {c}, which is not its child"));
                }
            }
            CapsuleSpec::Terminal { axis, length, length_regressor } => {
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return schema(format!("link {i} terminal axis is not unit length"));
                }
                if length_regressor.len() != shape_dim {
                    return schema(format!("link {i} length regressor does not have {shape_dim} entries"));
                }
                let l_min = length - BETA_BOUND * length_regressor.iter().map(|s| s.abs()).sum::<f64>();
                if !(l_min > 0.0) {
                    return schema(format!("link {i} terminal length can reach {l_min} inside the shape box"));
                }
            }
        }
    }
    Ok(())
}

/// True when some coordinate interval of `o⁰ + Sβ` over the box excludes zero.
fn offset_bounded_away_from_zero(rest: &Vector3<f64>, reg: &Matrix3xX<f64>) -> bool {
    (0..3).any(|r| {
        let spread = BETA_BOUND * reg.row(r).iter().map(|v| v.abs()).sum::<f64>();
        rest[r] - spread > 0.0 || rest[r] + spread < 0.0
    })
}

fn capsule_template(links: &[LinkDef], link: &LinkDef) -> [TemplateVertex; VERTICES_PER_CAPSULE] {
    let end0 = match &link.capsule {
        CapsuleSpec::Child(c) => links[*c].rest_offset,
        CapsuleSpec::Terminal { axis, length, .. } => axis * *length,
    };
    let d = end0.normalize();
    let helper = if d.cross(&Vector3::z()).norm() > 1e-6 { Vector3::z() } else { Vector3::x() };
    let u = d.cross(&helper).normalize();
    let w = d.cross(&u);
    let radial = |k: usize| {
        let phi = std::f64::consts::TAU * k as f64 / CAPSULE_SEGMENTS as f64;
        u * phi.cos() + w * phi.sin()
    };
    // (axis weight, polar cosine along d, polar sine) per ring
    let (c30, s30) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let (c60, s60) = (60f64.to_radians().cos(), 60f64.to_radians().sin());
    let rings: [(f64, f64, f64); CAPSULE_RINGS] = [
        (0.0, -c30, s30),
        (0.0, -c60, s60),
        (0.0, 0.0, 1.0),
        (1.0 / 3.0, 0.0, 1.0),
        (2.0 / 3.0, 0.0, 1.0),
        (1.0, 0.0, 1.0),
        (1.0, c60, s60),
        (1.0, c30, s30),
    ];
    let mut out = [TemplateVertex { axis_weight: 0.0, direction: -d }; VERTICES_PER_CAPSULE];
    for (r, &(weight, along, across)) in rings.iter().enumerate() {
        for k in 0..CAPSULE_SEGMENTS {
            out[1 + r * CAPSULE_SEGMENTS + k] =
                TemplateVertex { axis_weight: weight, direction: d * along + radial(k) * across };
        }
    }
    out[END_POLE] = TemplateVertex { axis_weight: 1.0, direction: d };
    out
}

/// Named reference pose with the vertex pairs that should touch in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPose {
    pub name: String,
    /// Preset group, e.g. `reference` or `pinch`.
    pub group: String,
    /// Finger pinched against the thumb, when this is a pinch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finger: Option<Finger>,
    pub pose: PoseParams,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactPairTable {
    pub poses: Vec<ContactPose>,
}

impl ContactPairTable {
    pub fn pinch(&self, finger: Finger) -> Option<&ContactPose> {
        self.poses.iter().find(|p| p.finger == Some(finger))
    }

    pub fn by_name(&self, name: &str) -> Option<&ContactPose> {
        self.poses.iter().find(|p| p.name == name)
    }

    pub fn group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a ContactPose> + 'a {
        self.poses.iter().filter(move |p| p.group == group)
    }
}

/// One endpoint vertex per finger, thumb first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FingertipTable(pub [usize; 5]);

impl FingertipTable {
    pub fn vertex(&self, finger: Finger) -> usize {
        self.0[finger.ordinal()]
    }

    /// End pole of each distal capsule.
    pub fn distal_poles() -> Self {
        FingertipTable(Finger::ALL.map(|f| f.distal_link() * VERTICES_PER_CAPSULE + END_POLE))
    }
}

/// Skeleton plus the calibration tables, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub name: String,
    pub mirror: bool,
    /// As stored, before mirroring.
    raw_skeleton: SkeletonDef,
    raw_contacts: ContactPairTable,
    skeleton: SkeletonDef,
    contacts: ContactPairTable,
    pub fingertips: FingertipTable,
}

impl HandModel {
    pub fn new(
        name: impl Into<String>,
        mirror: bool,
        skeleton: SkeletonDef,
        contacts: ContactPairTable,
        fingertips: FingertipTable,
    ) -> Result<Self, ModelError> {
        let n = skeleton.vertex_count();
        let vertex_links = skeleton.vertex_links();
        for pose in &contacts.poses {
            for &(j, k) in &pose.pairs {
                if j >= n || k >= n {
                    return Err(ModelError::Schema(format!("contact pair ({j}, {k}) in '{}' out of range", pose.name)));
                }
                if vertex_links[j] == vertex_links[k] {
                    return Err(ModelError::Schema(format!(
                        "contact pair ({j}, {k}) in '{}' lies on a single link",
                        pose.name
                    )));
                }
            }
        }
        for f in Finger::ALL {
            let v = fingertips.vertex(f);
            if v >= n || vertex_links[v] as usize != f.distal_link() {
                return Err(ModelError::Schema(format!("fingertip vertex {v} is not on the {} distal link", f.name())));
            }
        }
        let (eff_skeleton, eff_contacts) = if mirror {
            (mirror_skeleton(&skeleton)?, mirror_contacts(&contacts))
        } else {
            (skeleton.clone(), contacts.clone())
        };
        Ok(Self {
            name: name.into(),
            mirror,
            raw_skeleton: skeleton,
            raw_contacts: contacts,
            skeleton: eff_skeleton,
            contacts: eff_contacts,
            fingertips,
        })
    }

    /// Skeleton with the mirror flag applied; use this for all geometry.
    pub fn skeleton(&self) -> &SkeletonDef {
        &self.skeleton
    }

    pub fn contacts(&self) -> &ContactPairTable {
        &self.contacts
    }

    pub(crate) fn raw_parts(&self) -> (&SkeletonDef, &ContactPairTable) {
        (&self.raw_skeleton, &self.raw_contacts)
    }

    pub fn shape_dim(&self) -> usize {
        self.skeleton.shape_dim()
    }

    pub fn zero_shape(&self) -> ShapeParams {
        ShapeParams::zeros(self.shape_dim())
    }

    pub fn forward_kinematics(&self, beta: &ShapeParams, pose: &PoseParams) -> Result<Vec<LinkTransform>, ModelError> {
        self.skeleton.forward_kinematics(beta, pose)
    }

    pub fn build_mesh(&self, beta: &ShapeParams, pose: &PoseParams) -> Result<HandMesh, ModelError> {
        self.skeleton.build_mesh(beta, pose)
    }

    pub fn vertex_position(&self, beta: &ShapeParams, pose: &PoseParams, vertex: usize) -> Result<Vector3<f64>, ModelError> {
        self.skeleton.vertex_position(beta, pose, vertex)
    }

    pub fn vertex_jacobian_beta(
        &self,
        beta: &ShapeParams,
        pose: &PoseParams,
        vertex: usize,
    ) -> Result<Matrix3xX<f64>, ModelError> {
        self.skeleton.vertex_jacobian_beta(beta, pose, vertex)
    }

    pub fn fingertip_position(&self, beta: &ShapeParams, pose: &PoseParams, finger: Finger) -> Result<Vector3<f64>, ModelError> {
        self.vertex_position(beta, pose, self.fingertips.vertex(finger))
    }

    /// World rotation of every link for the given pose (β-independent).
    pub fn link_rotations(&self, pose: &PoseParams) -> Vec<Rotation3> {
        let mut out: Vec<Rotation3> = Vec::with_capacity(NUM_LINKS);
        for (i, l) in self.skeleton.links().iter().enumerate() {
            let r = match l.parent {
                None => pose.root_rotation,
                Some(p) => out[p] * pose.link_local_rotation(i),
            };
            out.push(r);
        }
        out
    }

    /// SHA-256 of the canonical JSON document.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = model_to_json(self);
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

const MIRROR: [f64; 3] = [1.0, -1.0, 1.0];

fn mirror_vec(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x * MIRROR[0], v.y * MIRROR[1], v.z * MIRROR[2])
}

fn mirror_rotation(r: &Rotation3) -> Rotation3 {
    let m = nalgebra::Matrix3::from_diagonal(&Vector3::from(MIRROR));
    Rotation3::from_matrix_unchecked(m * r.matrix() * m)
}

fn mirror_skeleton(s: &SkeletonDef) -> Result<SkeletonDef, ModelError> {
    let links = s
        .links()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            l.rest_offset = mirror_vec(&l.rest_offset);
            for c in 0..l.offset_regressor.ncols() {
                l.offset_regressor[(1, c)] = -l.offset_regressor[(1, c)];
            }
            if let CapsuleSpec::Terminal { axis, .. } = &mut l.capsule {
                *axis = mirror_vec(axis);
            }
            l
        })
        .collect();
    SkeletonDef::new(links, s.shape_dim())
}

fn mirror_contacts(c: &ContactPairTable) -> ContactPairTable {
    let poses = c
        .poses
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.pose.root_rotation = mirror_rotation(&p.pose.root_rotation);
            p.pose.root_translation = mirror_vec(&p.pose.root_translation);
            for r in p.pose.joint_rotations.iter_mut() {
                *r = mirror_rotation(r);
            }
            p
        })
        .collect();
    ContactPairTable { poses }
}

/// Regressor matrix helper for building models in code.
pub fn regressor_from_rows(rows: &[Vec<f64>; 3]) -> Matrix3xX<f64> {
    let b = rows[0].len();
    Matrix3xX::from_fn(b, |r, c| rows[r][c])
}
