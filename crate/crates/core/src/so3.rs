//! Rotation algebra on SO(3).
//!
//! Two representations are used throughout the crate: [`UnitQuaternion`]
//! (what sensors emit and what goes on the wire) and [`Rotation3`] (what
//! the solvers work with). Both are validated on construction so downstream
//! code never has to re-check orthonormality.
//!
//! Angles are radians everywhere in this module.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3, SVD};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Tolerance used when validating externally supplied rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Smallest singular value accepted by [`project_to_so3`].
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum So3Error {
    #[error("matrix is rank deficient (smallest singular value {smallest_singular_value:e})")]
    DegenerateMatrix { smallest_singular_value: f64 },
    #[error("matrix is not a rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("quaternion has zero or non-finite norm")]
    ZeroQuaternion,
    #[error("no rotations to average")]
    EmptyInput,
    #[error("weights must be non-negative, finite, not all zero and match the estimate count")]
    InvalidWeights,
}

/// Unit quaternion in (w, x, y, z) order with canonical sign `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the input and folds it into the `w >= 0` hemisphere.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, So3Error> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(So3Error::ZeroQuaternion);
        }
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        Ok(Self { w: w * s, x: x * s, y: y * s, z: z * s })
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self, So3Error> {
        Self::new(q[0], q[1], q[2], q[3])
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_rotation(&self) -> Rotation3 {
        quat_to_matrix(self)
    }
}

impl Serialize for UnitQuaternion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        // stored values are already unit and canonical; renormalizing would
        // perturb the last bit and break exact round trips
        let n2 = w * w + x * x + y * y + z * z;
        if w >= 0.0 && (n2 - 1.0).abs() < 1e-12 {
            return Ok(Self { w, x, y, z });
        }
        Self::new(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Proper rotation matrix (orthonormal, det +1).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl fmt::Debug for Rotation3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Rotation3").field(&self.rows()).finish()
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` only if it is a rotation within [`ROTATION_TOLERANCE`].
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self, So3Error> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !orthogonality.is_finite()
            || orthogonality > ROTATION_TOLERANCE
            || (det - 1.0).abs() > ROTATION_TOLERANCE
        {
            return Err(So3Error::NotARotation { orthogonality, det });
        }
        Ok(Self(m))
    }

    pub fn try_from_rows(rows: [[f64; 3]; 3]) -> Result<Self, So3Error> {
        Self::try_from_matrix(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    /// Wraps a matrix the caller has constructed to be a rotation.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn transform(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation of `angle` about the (not necessarily normalized) `axis`.
    /// A zero axis yields the identity.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let m = Matrix3::new(
            t * k.x * k.x + c,
            t * k.x * k.y - s * k.z,
            t * k.x * k.z + s * k.y,
            t * k.x * k.y + s * k.z,
            t * k.y * k.y + c,
            t * k.y * k.z - s * k.x,
            t * k.x * k.z - s * k.y,
            t * k.y * k.z + s * k.x,
            t * k.z * k.z + c,
        );
        Self(m)
    }

    /// Rotation whose axis is `v / |v|` and angle `|v|`.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }
    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }
    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        angle_of_matrix(&self.0)
    }

    /// Axis-angle vector (log map). Uses the quaternion route so it stays
    /// well conditioned near both 0 and pi.
    pub fn to_rotation_vector(&self) -> Vector3<f64> {
        let q = matrix_to_quat(self);
        let v = Vector3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s == 0.0 {
            return Vector3::zeros();
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    /// Spherical interpolation from `self` (t = 0) to `other` (t = 1).
    pub fn slerp(&self, other: &Rotation3, t: f64) -> Rotation3 {
        let delta = (self.inverse() * *other).to_rotation_vector();
        *self * Rotation3::from_rotation_vector(&(delta * t))
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        matrix_to_quat(self)
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Serialize for Rotation3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Self::try_from_rows(rows).map_err(serde::de::Error::custom)
    }
}

pub fn quat_to_matrix(q: &UnitQuaternion) -> Rotation3 {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Rotation3(m)
}

/// Shepperd's method: pivots on the largest of the four squared components.
pub fn matrix_to_quat(r: &Rotation3) -> UnitQuaternion {
    let m = &r.0;
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let (w, x, y, z) = if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
        let s = (1.0 + trace).sqrt() * 2.0;
        (
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        )
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        (
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        )
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        (
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        (
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        )
    };
    UnitQuaternion::new(w, x, y, z).expect("rotation matrix yields a non-zero quaternion")
}

// Same quantity as acos((tr - 1) / 2) but evaluated as atan2(sin, cos), which
// keeps full relative precision for small angles.
fn angle_of_matrix(m: &Matrix3<f64>) -> f64 {
    let cos2 = m[(0, 0)] + m[(1, 1)] + m[(2, 2)] - 1.0;
    let sin2 = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
    .norm();
    sin2.atan2(cos2).clamp(0.0, std::f64::consts::PI)
}

/// Geodesic distance on SO(3): the angle of `aᵀb`, in `[0, pi]`.
pub fn geodesic_angle(a: &Rotation3, b: &Rotation3) -> f64 {
    angle_of_matrix(&(a.0.transpose() * b.0))
}

/// Frobenius-nearest rotation to `m`.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation3, So3Error> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(So3Error::DegenerateMatrix { smallest_singular_value: f64::NAN });
    }
    let svd = SVD::new(*m, true, true);
    let smallest = svd.singular_values.min();
    if smallest <= RANK_TOLERANCE {
        return Err(So3Error::DegenerateMatrix { smallest_singular_value: smallest });
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    Ok(Rotation3(r))
}

/// Weighted chordal mean: the projection of `Σ w_k R_k` onto SO(3).
pub fn average_rotation(estimates: &[Rotation3], weights: &[f64]) -> Result<Rotation3, So3Error> {
    if estimates.is_empty() {
        return Err(So3Error::EmptyInput);
    }
    if weights.len() != estimates.len()
        || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
        || weights.iter().all(|w| *w == 0.0)
    {
        return Err(So3Error::InvalidWeights);
    }
    let sum = estimates
        .iter()
        .zip(weights)
        .fold(Matrix3::zeros(), |acc, (r, w)| acc + r.0 * *w);
    project_to_so3(&sum)
}

/// Chordal mean with equal weights.
pub fn mean_rotation(estimates: &[Rotation3]) -> Result<Rotation3, So3Error> {
    average_rotation(estimates, &vec![1.0; estimates.len()])
}

/// Uniformly distributed rotation (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = UnitQuaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin())
        .expect("unit by construction");
    quat_to_matrix(&q)
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.random::<f64>() * 2.0 - 1.0;
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Rotation about a uniformly random axis by an angle uniform in `[0, max_angle]`.
pub fn random_rotation_within<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Rotation3 {
    let axis = random_unit_vector(rng);
    let angle = rng.random::<f64>() * max_angle;
    Rotation3::from_axis_angle(&axis, angle)
}
