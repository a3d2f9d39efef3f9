//! Synthetic partial scans: the vertices a single viewpoint would see, with
//! sensor noise. Self-occlusion is ignored.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::chamfer::PointCloud;
use super::MetricsError;
use crate::hand_model::HandMesh;

/// Area-weighted unit normals, following the face winding.
pub fn vertex_normals(vertices: &[Vector3<f64>], faces: &[[u32; 3]]) -> Vec<Vector3<f64>> {
    let mut normals = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in f {
            normals[i as usize] += n;
        }
    }
    for n in normals.iter_mut() {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    normals
}

/// Vertices facing a camera that looks along `view_direction`, each moved by
/// isotropic Gaussian noise of `noise_mm` per axis.
pub fn synthetic_partial_cloud(
    mesh: &HandMesh,
    view_direction: &Vector3<f64>,
    noise_mm: f64,
    rng: &mut impl Rng,
) -> Result<PointCloud, MetricsError> {
    if !(noise_mm.is_finite() && noise_mm >= 0.0) || view_direction.norm() == 0.0 {
        return Err(MetricsError::NonFinite);
    }
    let toward_camera = -view_direction.normalize();
    let normals = vertex_normals(&mesh.vertices, &mesh.faces);
    let dist = Normal::new(0.0, noise_mm).map_err(|_| MetricsError::NonFinite)?;
    let points = mesh
        .vertices
        .iter()
        .zip(&normals)
        .filter(|(_, n)| n.dot(&toward_camera) > 0.0)
        .map(|(v, _)| v + Vector3::from_fn(|_, _| dist.sample(rng)))
        .collect();
    PointCloud::new(points)
}
