//! Triangle-mesh surfaces: closest-point queries through a bounding-volume
//! hierarchy, face normals, areas and barycentric coordinates.
//!
//! When the closest point lies on an edge or vertex shared by several faces,
//! the face with the smallest index owns it.

#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use crate::error::{Error, Result};

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn add_scaled(a: V3, b: V3, s: f64) -> V3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

const LEAF_SIZE: usize = 4;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: V3,
    pub face: usize,
    pub dist2: f64,
}

#[derive(Debug, Clone)]
struct Node {
    lo: V3,
    hi: V3,
    // Leaves index into `order[start..end]`; internal nodes hold child indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<V3>,
    faces: Vec<[usize; 3]>,
    face_normals: Vec<V3>,
    face_areas: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<V3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyInput("mesh has no faces"));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::MeshQuality("non-finite vertex coordinate".into()));
        }
        let scale = vertices
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut face_normals = Vec::with_capacity(faces.len());
        let mut face_areas = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::MeshQuality(alloc::format!(
                    "face {fi} references a vertex index ≥ {}",
                    vertices.len()
                )));
            }
            let c = cross(sub(vertices[f[1]], vertices[f[0]]), sub(vertices[f[2]], vertices[f[0]]));
            let len = dot(c, c).sqrt();
            if len <= 1e-14 * scale * scale {
                return Err(Error::MeshQuality(alloc::format!("face {fi} has zero area")));
            }
            face_normals.push([c[0] / len, c[1] / len, c[2] / len]);
            face_areas.push(0.5 * len);
        }
        let mut mesh = Self {
            vertices,
            faces,
            face_normals,
            face_areas,
            order: Vec::new(),
            nodes: Vec::new(),
        };
        mesh.build_bvh();
        Ok(mesh)
    }

    /// Regular icosahedron inscribed in the unit sphere, outward-oriented faces.
    pub fn icosahedron() -> Self {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let s = (1.0 + p * p).sqrt();
        let raw: [V3; 12] = [
            [-1.0, p, 0.0],
            [1.0, p, 0.0],
            [-1.0, -p, 0.0],
            [1.0, -p, 0.0],
            [0.0, -1.0, p],
            [0.0, 1.0, p],
            [0.0, -1.0, -p],
            [0.0, 1.0, -p],
            [p, 0.0, -1.0],
            [p, 0.0, 1.0],
            [-p, 0.0, -1.0],
            [-p, 0.0, 1.0],
        ];
        let vertices = raw.iter().map(|v| [v[0] / s, v[1] / s, v[2] / s]).collect();
        let faces = alloc::vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        Self::new(vertices, faces).expect("icosahedron is well formed")
    }

    pub fn vertices(&self) -> &[V3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn face_normal(&self, face: usize) -> V3 {
        self.face_normals[face]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        self.face_areas[face]
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    pub fn face_vertices(&self, face: usize) -> [V3; 3] {
        let f = self.faces[face];
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    /// Point at barycentric weights `(w0, w1, w2)` on `face`.
    pub fn point_at(&self, face: usize, w: [f64; 3]) -> V3 {
        let [a, b, c] = self.face_vertices(face);
        let mut p = [0.0; 3];
        for i in 0..3 {
            p[i] = w[0] * a[i] + w[1] * b[i] + w[2] * c[i];
        }
        p
    }

    /// Barycentric coordinates of `p` with respect to `face` (p is assumed to
    /// lie in the face plane).
    pub fn barycentric(&self, face: usize, p: V3) -> [f64; 3] {
        let [a, b, c] = self.face_vertices(face);
        let v0 = sub(b, a);
        let v1 = sub(c, a);
        let v2 = sub(p, a);
        let d00 = dot(v0, v0);
        let d01 = dot(v0, v1);
        let d11 = dot(v1, v1);
        let d20 = dot(v2, v0);
        let d21 = dot(v2, v1);
        let denom = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / denom;
        let w = (d00 * d21 - d01 * d20) / denom;
        [1.0 - v - w, v, w]
    }

    /// Nearest surface point, owning face and squared distance.
    pub fn closest_point(&self, x: &[f64]) -> ClosestPoint {
        let q = [x[0], x[1], x[2]];
        let mut best = ClosestPoint { point: q, face: usize::MAX, dist2: f64::INFINITY };
        let mut stack: Vec<usize> = alloc::vec![0];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let bound = aabb_dist2(q, node.lo, node.hi);
            if bound > best.dist2 + tie_eps(best.dist2) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &face in &self.order[start..end] {
                        let [a, b, c] = self.face_vertices(face);
                        let p = closest_on_triangle(q, a, b, c);
                        let d = sub(q, p);
                        let d2 = dot(d, d);
                        let eps = tie_eps(best.dist2);
                        if d2 < best.dist2 - eps || (d2 <= best.dist2 + eps && face < best.face) {
                            best = ClosestPoint { point: p, face, dist2: d2.min(best.dist2) };
                            if d2 < best.dist2 {
                                best.dist2 = d2;
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = aabb_dist2(q, self.nodes[left].lo, self.nodes[left].hi);
                    let dr = aabb_dist2(q, self.nodes[right].lo, self.nodes[right].hi);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }

    /// Same as [`Self::closest_point`] by exhaustive search over faces.
    pub fn closest_point_brute_force(&self, x: &[f64]) -> ClosestPoint {
        let q = [x[0], x[1], x[2]];
        let mut best = ClosestPoint { point: q, face: usize::MAX, dist2: f64::INFINITY };
        for face in 0..self.faces.len() {
            let [a, b, c] = self.face_vertices(face);
            let p = closest_on_triangle(q, a, b, c);
            let d = sub(q, p);
            let d2 = dot(d, d);
            if d2 < best.dist2 - tie_eps(best.dist2) {
                best = ClosestPoint { point: p, face, dist2: d2 };
            }
        }
        best
    }

    pub(super) fn signed_distance(&self, x: &[f64]) -> f64 {
        let cp = self.closest_point(x);
        let d = cp.dist2.sqrt();
        let side = dot(sub([x[0], x[1], x[2]], cp.point), self.face_normals[cp.face]);
        if side < 0.0 {
            -d
        } else {
            d
        }
    }

    fn build_bvh(&mut self) {
        let centroids: Vec<V3> = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.face_vertices(f);
                [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0]
            })
            .collect();
        self.order = (0..self.faces.len()).collect();
        self.nodes.clear();
        let mut order = core::mem::take(&mut self.order);
        self.build_node(&mut order, 0, centroids.len(), &centroids);
        self.order = order;
    }

    fn build_node(&mut self, order: &mut [usize], start: usize, end: usize, centroids: &[V3]) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &f in &order[start..end] {
            for v in self.face_vertices(f) {
                for i in 0..3 {
                    lo[i] = lo[i].min(v[i]);
                    hi[i] = hi[i].max(v[i]);
                }
            }
        }
        let idx = self.nodes.len();
        self.nodes.push(Node { lo, hi, kind: NodeKind::Leaf { start, end } });
        if end - start <= LEAF_SIZE {
            return idx;
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        order[start..end].sort_by(|&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
        let mid = start + (end - start) / 2;
        let left = self.build_node(order, start, mid, centroids);
        let right = self.build_node(order, mid, end, centroids);
        self.nodes[idx].kind = NodeKind::Inner { left, right };
        idx
    }
}

fn tie_eps(d2: f64) -> f64 {
    if d2.is_finite() {
        1e-12 * d2.max(1e-12)
    } else {
        0.0
    }
}

fn aabb_dist2(q: V3, lo: V3, hi: V3) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = if q[i] < lo[i] {
            lo[i] - q[i]
        } else if q[i] > hi[i] {
            q[i] - hi[i]
        } else {
            0.0
        };
        s += d * d;
    }
    s
}

/// Closest point on triangle `abc` to `p` by Voronoi-region classification.
pub fn closest_on_triangle(p: V3, a: V3, b: V3, c: V3) -> V3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add_scaled(a, ab, v);
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add_scaled(a, ac, w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add_scaled(b, sub(c, b), w);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add_scaled(add_scaled(a, ab, v), ac, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn unit_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn foot_of_perpendicular_inside_face() {
        let m = unit_triangle();
        let cp = m.closest_point(&[0.25, 0.25, 1.0]);
        assert_eq!(cp.point, [0.25, 0.25, 0.0]);
        assert_eq!(cp.face, 0);
        assert_relative_eq!(cp.dist2, 1.0);
    }

    #[test]
    fn outside_point_lands_on_hypotenuse() {
        // Dense barycentric grid search as the oracle.
        let m = unit_triangle();
        let q = [2.0, 2.0, 0.0];
        let steps = 2000;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let p = [i as f64 / steps as f64, j as f64 / steps as f64, 0.0];
                let d = sub(q, p);
                if dot(d, d) < best.0 {
                    best = (dot(d, d), p);
                }
            }
        }
        let cp = m.closest_point(&q);
        assert_relative_eq!(cp.point[0], best.1[0], epsilon = 1e-3);
        assert_relative_eq!(cp.point[1], best.1[1], epsilon = 1e-3);
        assert_eq!(cp.point, [0.5, 0.5, 0.0]);
    }

    #[test]
    fn shared_edge_belongs_to_smallest_face_index() {
        // Two triangles sharing the edge (1,0,0)-(0,1,0), listed so the
        // higher index would be visited first by a naive search.
        let m = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[1, 3, 2], [0, 1, 2]],
        )
        .unwrap();
        let cp = m.closest_point(&[0.5, 0.5, 0.7]);
        assert_eq!(cp.face, 0);
        let cp = m.closest_point(&[0.5, 0.5, -0.7]);
        assert_eq!(cp.face, 0);
    }

    #[test]
    fn degenerate_faces_are_rejected() {
        let err = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MeshQuality(_)));
        let err = TriangleMesh::new(vec![[0.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::MeshQuality(_)));
    }

    #[test]
    fn icosahedron_geometry() {
        let m = TriangleMesh::icosahedron();
        assert_eq!(m.num_faces(), 20);
        for f in 0..20 {
            let n = m.face_normal(f);
            assert_relative_eq!(dot(n, n), 1.0, epsilon = 1e-12);
            let [a, b, c] = m.face_vertices(f);
            let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0];
            assert!(dot(n, centroid) > 0.0, "face {f} is not outward");
        }
    }

    #[test]
    fn bvh_matches_brute_force() {
        let m = TriangleMesh::icosahedron();
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 3.0 - 1.5
        };
        for _ in 0..500 {
            let q = [next(), next(), next()];
            let a = m.closest_point(&q);
            let b = m.closest_point_brute_force(&q);
            assert_relative_eq!(a.dist2, b.dist2, epsilon = 1e-12);
        }
    }
}
