//! Evaluation metrics. Every accelerated geometric query has an exhaustive
//! twin that gives the same bits.

mod chamfer;
mod cloud;
mod drift;
mod joint;
mod mesh_distance;
mod pinch;

pub use chamfer::{
    chamfer_unidirectional, chamfer_unidirectional_brute, shape_error, PointCloud, ShapeError, VertexGrid,
};
pub use cloud::{synthetic_partial_cloud, vertex_normals};
pub use drift::{drift_report, kendall_tau, DriftPoint, DriftReport, DriftSample};
pub use joint::{joint_error_stats, BinResidual, JointErrorStats, JOINT_BIN_WIDTH_DEG};
pub use mesh_distance::{
    closest_point_on_triangle, point_to_mesh, point_to_mesh_brute, MeshBvh, MeshDistance, TriangleMesh,
};
pub use pinch::{pinch_distance, pinch_report, PinchReport};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("series lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {min} samples, got {got}")]
    TooShort { got: usize, min: usize },
    #[error("reference series has zero range")]
    ZeroRange,
    #[error("empty input")]
    EmptyInput,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("face {face} refers to vertex {index}, mesh has {len}")]
    BadFace { face: usize, index: usize, len: usize },
    #[error(transparent)]
    Model(#[from] crate::hand_model::ModelError),
}
