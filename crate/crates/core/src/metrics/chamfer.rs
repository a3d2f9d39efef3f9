//! One-sided Chamfer distance from a partial cloud to mesh vertices.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, MetricsError> {
        if points.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[inline]
pub(crate) fn squared_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

/// Relative slack on pruning bounds, so rounding can never discard the true nearest.
const PRUNE_SLACK: f64 = 1e-9;

/// Uniform grid over a vertex set for nearest-vertex queries.
#[derive(Debug, Clone)]
pub struct VertexGrid {
    vertices: Vec<Vector3<f64>>,
    origin: Vector3<f64>,
    cell: f64,
    dims: [i64; 3],
    /// CSR layout: vertices of cell c are `order[starts[c]..starts[c + 1]]`.
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl VertexGrid {
    pub fn new(vertices: &[Vector3<f64>]) -> Result<Self, MetricsError> {
        if vertices.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MetricsError::NonFinite);
        }
        let mut lo = vertices[0];
        let mut hi = vertices[0];
        for v in vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let extent = hi - lo;
        // about two vertices per occupied cell for a surface-like set
        let volume = extent.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (volume / vertices.len() as f64).cbrt() * 2.0;
        let longest = extent.max();
        if !(cell.is_finite() && cell > 0.0) || longest > 0.0 && cell < longest / 256.0 {
            cell = (longest / 256.0).max(f64::MIN_POSITIVE);
        }
        if longest == 0.0 {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).floor() as i64 + 1).max(1));
        let cells = (dims[0] * dims[1] * dims[2]) as usize;
        let mut grid = Self {
            vertices: vertices.to_vec(),
            origin: lo,
            cell,
            dims,
            starts: vec![0; cells + 1],
            order: vec![0; vertices.len()],
        };
        let ids: Vec<usize> = vertices.iter().map(|v| grid.index(grid.clamped_cell(v))).collect();
        for &c in &ids {
            grid.starts[c + 1] += 1;
        }
        for c in 0..cells {
            grid.starts[c + 1] += grid.starts[c];
        }
        let mut fill = grid.starts.clone();
        for (v, &c) in ids.iter().enumerate() {
            grid.order[fill[c] as usize] = v as u32;
            fill[c] += 1;
        }
        Ok(grid)
    }

    fn cell_of(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64)
    }

    fn clamped_cell(&self, p: &Vector3<f64>) -> [i64; 3] {
        let c = self.cell_of(p);
        [0, 1, 2].map(|k| c[k].clamp(0, self.dims[k] - 1))
    }

    fn index(&self, c: [i64; 3]) -> usize {
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    /// Squared distance to the nearest vertex.
    pub fn nearest_squared(&self, p: &Vector3<f64>) -> f64 {
        let c = self.cell_of(p);
        // Chebyshev distance (in cells) from p's cell to the grid box
        let gap = (0..3).map(|k| (-c[k]).max(c[k] - (self.dims[k] - 1)).max(0)).max().unwrap_or(0);
        let far = (0..3).map(|k| c[k].max(self.dims[k] - 1 - c[k])).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        let mut ring = gap;
        loop {
            self.visit_ring(c, ring, p, &mut best);
            // every unvisited cell is at least `ring` whole cells away from p
            let bound = ring as f64 * self.cell;
            if bound * bound * (1.0 - PRUNE_SLACK) > best || ring >= far {
                break;
            }
            ring += 1;
        }
        best
    }

    fn visit_ring(&self, c: [i64; 3], ring: i64, p: &Vector3<f64>, best: &mut f64) {
        let lo = [0, 1, 2].map(|k| (c[k] - ring).max(0));
        let hi = [0, 1, 2].map(|k| (c[k] + ring).min(self.dims[k] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let cheb = (x - c[0]).abs().max((y - c[1]).abs()).max((z - c[2]).abs());
                    if cheb != ring {
                        continue;
                    }
                    let id = self.index([x, y, z]);
                    for &v in &self.order[self.starts[id] as usize..self.starts[id + 1] as usize] {
                        let d = squared_distance(p, &self.vertices[v as usize]);
                        if d < *best {
                            *best = d;
                        }
                    }
                }
            }
        }
    }
}

fn validate(cloud: &[Vector3<f64>], vertices: &[Vector3<f64>]) -> Result<(), MetricsError> {
    if cloud.is_empty() || vertices.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Mean over the cloud of the squared distance to the nearest vertex, mm².
pub fn chamfer_unidirectional(cloud: &PointCloud, vertices: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    validate(cloud.points(), vertices)?;
    let grid = VertexGrid::new(vertices)?;
    let sum: f64 = cloud.points().iter().map(|p| grid.nearest_squared(p)).sum();
    Ok(sum / cloud.len() as f64)
}

/// The exhaustive twin of [`chamfer_unidirectional`].
pub fn chamfer_unidirectional_brute(cloud: &PointCloud, vertices: &[Vector3<f64>]) -> Result<f64, MetricsError> {
    validate(cloud.points(), vertices)?;
    let sum: f64 = cloud
        .points()
        .iter()
        .map(|p| vertices.iter().map(|v| squared_distance(p, v)).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(sum / cloud.len() as f64)
}

/// Both readings of the shape error: the literal mean of squares and its root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeError {
    pub e_sr_mm2: f64,
    pub rms_mm: f64,
}

pub fn shape_error(cloud: &PointCloud, vertices: &[Vector3<f64>]) -> Result<ShapeError, MetricsError> {
    let e = chamfer_unidirectional(cloud, vertices)?;
    Ok(ShapeError { e_sr_mm2: e, rms_mm: e.sqrt() })
}
