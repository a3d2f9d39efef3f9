//! Exact point-to-triangle-mesh distance, with a bounding-volume hierarchy.

use nalgebra::Vector3;

use super::chamfer::squared_distance;
use super::MetricsError;
use crate::hand_model::HandMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MetricsError> {
        if faces.is_empty() {
            return Err(MetricsError::EmptyMesh);
        }
        for (face, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i as usize >= vertices.len()) {
                return Err(MetricsError::BadFace { face, index: index as usize, len: vertices.len() });
            }
        }
        if vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MetricsError::NonFinite);
        }
        Ok(Self { vertices, faces })
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }
}

impl TryFrom<&HandMesh> for TriangleMesh {
    type Error = MetricsError;

    fn try_from(mesh: &HandMesh) -> Result<Self, MetricsError> {
        TriangleMesh::new(mesh.vertices.clone(), mesh.faces.clone())
    }
}

fn closest_point_on_segment(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let len2 = ab.dot(&ab);
    if len2 == 0.0 {
        return *a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

/// Closest point to `p` on triangle `abc`, by Voronoi-region case analysis.
/// Zero-area triangles are treated as their edges.
pub fn closest_point_on_triangle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared() == 0.0 {
        let mut best = closest_point_on_segment(p, a, b);
        for q in [closest_point_on_segment(p, b, c), closest_point_on_segment(p, a, c)] {
            if squared_distance(p, &q) < squared_distance(p, &best) {
                best = q;
            }
        }
        return best;
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshDistance {
    pub distance: f64,
    /// One of the nearest faces (ties may resolve differently between the two paths).
    pub face: usize,
    pub closest: Vector3<f64>,
}

fn face_squared(mesh: &TriangleMesh, face: usize, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let [a, b, c] = mesh.triangle(face);
    let q = closest_point_on_triangle(p, &a, &b, &c);
    (squared_distance(p, &q), q)
}

/// Triangle-by-triangle reference.
pub fn point_to_mesh_brute(p: &Vector3<f64>, mesh: &TriangleMesh) -> MeshDistance {
    let mut best = (f64::INFINITY, 0, *p);
    for face in 0..mesh.faces.len() {
        let (d, q) = face_squared(mesh, face, p);
        if d < best.0 {
            best = (d, face, q);
        }
    }
    MeshDistance { distance: best.0.sqrt(), face: best.1, closest: best.2 }
}

const LEAF_SIZE: usize = 4;
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    /// Leaf: faces `first..first + count`; inner: children at `first`, `first + 1`.
    first: u32,
    count: u32,
}

#[derive(Debug, Clone)]
pub struct MeshBvh {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    faces: Vec<u32>,
}

fn box_squared(p: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>) -> f64 {
    let mut d = 0.0;
    for k in 0..3 {
        let e = (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0);
        d += e * e;
    }
    d
}

impl MeshBvh {
    pub fn new(mesh: TriangleMesh) -> Self {
        let n = mesh.faces.len();
        let bounds: Vec<(Vector3<f64>, Vector3<f64>)> = (0..n)
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
            })
            .collect();
        let centroids: Vec<Vector3<f64>> = bounds.iter().map(|(lo, hi)| (lo + hi) * 0.5).collect();
        let mut faces: Vec<u32> = (0..n as u32).collect();
        let mut nodes = vec![Node { lo: Vector3::zeros(), hi: Vector3::zeros(), first: 0, count: 0 }];
        // (node, range) work list; children are allocated in pairs
        let mut work = vec![(0usize, 0usize, n)];
        while let Some((node, start, end)) = work.pop() {
            let slice = &mut faces[start..end];
            let (mut lo, mut hi) = bounds[slice[0] as usize];
            let (mut clo, mut chi) = (centroids[slice[0] as usize], centroids[slice[0] as usize]);
            for &f in slice.iter() {
                lo = lo.inf(&bounds[f as usize].0);
                hi = hi.sup(&bounds[f as usize].1);
                clo = clo.inf(&centroids[f as usize]);
                chi = chi.sup(&centroids[f as usize]);
            }
            nodes[node].lo = lo;
            nodes[node].hi = hi;
            if slice.len() <= LEAF_SIZE {
                nodes[node].first = start as u32;
                nodes[node].count = slice.len() as u32;
                continue;
            }
            let axis = (chi - clo).imax();
            let mid = slice.len() / 2;
            slice.select_nth_unstable_by(mid, |&x, &y| {
                centroids[x as usize][axis].total_cmp(&centroids[y as usize][axis]).then(x.cmp(&y))
            });
            let left = nodes.len();
            nodes.push(Node { lo, hi, first: 0, count: 0 });
            nodes.push(Node { lo, hi, first: 0, count: 0 });
            nodes[node].first = left as u32;
            nodes[node].count = 0;
            work.push((left, start, start + mid));
            work.push((left + 1, start + mid, end));
        }
        Self { mesh, nodes, faces }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn query(&self, p: &Vector3<f64>) -> MeshDistance {
        let mut best = (f64::INFINITY, 0usize, *p);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if box_squared(p, &node.lo, &node.hi) * (1.0 - PRUNE_SLACK) > best.0 {
                continue;
            }
            if node.count > 0 {
                for &f in &self.faces[node.first as usize..(node.first + node.count) as usize] {
                    let (d, q) = face_squared(&self.mesh, f as usize, p);
                    if d < best.0 || (d == best.0 && (f as usize) < best.1) {
                        best = (d, f as usize, q);
                    }
                }
            } else {
                let (l, r) = (node.first as usize, node.first as usize + 1);
                let dl = box_squared(p, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = box_squared(p, &self.nodes[r].lo, &self.nodes[r].hi);
                // nearer child on top of the stack
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        MeshDistance { distance: best.0.sqrt(), face: best.1, closest: best.2 }
    }
}

/// Distance from `p` to the mesh surface, mm.
pub fn point_to_mesh(p: &Vector3<f64>, mesh: &TriangleMesh) -> f64 {
    MeshBvh::new(mesh.clone()).query(p).distance
}
