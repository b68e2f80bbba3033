//! Synthetic target distributions: the planar Gaussian mixture, wrapped
//! normals on SO(k) and clamped Laplacian eigenfunction densities on meshes.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::manifold::{SpecialOrthogonal, TriangleMesh};
use crate::oracle::PlaneMixture;
use crate::rng::{fill_normal, standard_normal};

/// I.i.d. draws from `mix`, embedded at `z = 0`.
pub fn sample_gmm_plane<R: Rng + ?Sized>(mix: &PlaneMixture, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let m = mix.modes[rng.random_range(0..mix.modes.len())];
            alloc::vec![m[0] + mix.std * standard_normal(rng), m[1] + mix.std * standard_normal(rng), 0.0]
        })
        .collect()
}

/// Haar-random rotation in SO(k): QR of a Gaussian matrix with the signs of
/// `R`'s diagonal moved into `Q`, then one column flipped if `det Q = −1`.
pub fn random_rotation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(k, k);
    for v in g.iter_mut() {
        *v = standard_normal(rng);
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Draws `Q_c expm(A)` where `Q_c` is a uniformly chosen center and `A` is
/// skew-symmetric with independent `N(0, scale²)` entries above the diagonal.
/// Points are row-major flattened.
pub fn sample_wrapped_normal_son<R: Rng + ?Sized>(
    group: &SpecialOrthogonal,
    centers: &[DMatrix<f64>],
    scale: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let k = group.k();
    if centers.is_empty() {
        return Err(Error::EmptyInput("wrapped-normal centers"));
    }
    if !(scale >= 0.0) {
        return Err(Error::InvalidParameter("scale must be nonnegative".into()));
    }
    for c in centers {
        if c.shape() != (k, k) {
            return Err(Error::DimensionMismatch { expected: k * k, got: c.len() });
        }
        let off = (c * c.transpose() - DMatrix::<f64>::identity(k, k)).norm();
        if off > 1e-8 || c.determinant() < 0.0 {
            return Err(Error::InvalidParameter("center is not in SO(k)".into()));
        }
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let c = &centers[rng.random_range(0..centers.len())];
        let mut a = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let v = scale * standard_normal(rng);
                a[(i, j)] = v;
                a[(j, i)] = -v;
            }
        }
        out.push(SpecialOrthogonal::flatten(&(c * expm(&a))));
    }
    Ok(out)
}

/// Cotangent stiffness matrix `L` (positive semidefinite) and lumped
/// (one third of incident face areas) vertex masses.
pub fn cotangent_laplacian(mesh: &TriangleMesh) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let nv = mesh.vertices().len();
    let mut l = DMatrix::zeros(nv, nv);
    let mut mass = DVector::zeros(nv);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let area = mesh.face_area(fi);
        let pts = mesh.face_vertices(fi);
        for c in 0..3 {
            mass[f[c]] += area / 3.0;
            // Angle at corner c weights the opposite edge (a, b).
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            let u = sub3(pts[a], pts[c]);
            let v = sub3(pts[b], pts[c]);
            let cross = cross3(u, v);
            let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
            if sin <= 0.0 {
                return Err(Error::MeshQuality(alloc::format!("face {fi} is degenerate")));
            }
            let w = 0.5 * dot3(u, v) / sin;
            let (i, j) = (f[a], f[b]);
            l[(i, j)] -= w;
            l[(j, i)] -= w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
    }
    if mass.iter().any(|m| *m <= 0.0) {
        return Err(Error::MeshQuality("vertex without incident faces".into()));
    }
    Ok((l, mass))
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Generalized eigenpairs `L φ = λ M φ`, ascending, with `φᵀ M φ = 1`.
#[derive(Debug, Clone)]
pub struct MeshEigen {
    pub values: Vec<f64>,
    /// One eigenvector per column.
    pub vectors: DMatrix<f64>,
}

pub fn mesh_eigenpairs(mesh: &TriangleMesh) -> Result<MeshEigen> {
    let (l, mass) = cotangent_laplacian(mesh)?;
    let inv_sqrt = mass.map(|m| 1.0 / m.sqrt());
    let nv = mass.len();
    let a = DMatrix::from_fn(nv, nv, |i, j| inv_sqrt[i] * l[(i, j)] * inv_sqrt[j]);
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..nv).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(nv, nv, |r, c| inv_sqrt[r] * eig.eigenvectors[(r, order[c])]);
    Ok(MeshEigen { values, vectors })
}

/// Piecewise-linear density on a mesh with its face sampling probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshDensity {
    pub indices: Vec<usize>,
    /// Density at each vertex; integrates to 1 over the surface.
    pub vertex_values: Vec<f64>,
    pub face_probs: Vec<f64>,
}

fn surface_integral(mesh: &TriangleMesh, values: &[f64]) -> Vec<f64> {
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| mesh.face_area(fi) * (values[f[0]] + values[f[1]] + values[f[2]]) / 3.0)
        .collect()
}

/// Equal-weight mixture of clamped eigenfunctions `max(φ_i, 0)`, each scaled to
/// unit mass. The sign of `φ_i` is chosen so that its positive part carries
/// the larger mass.
pub fn mesh_eigen_density(mesh: &TriangleMesh, indices: &[usize]) -> Result<MeshDensity> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("eigen indices"));
    }
    let eig = mesh_eigenpairs(mesh)?;
    let nv = eig.values.len();
    let mut mix = alloc::vec![0.0; nv];
    for &idx in indices {
        if idx >= nv {
            return Err(Error::InvalidParameter(alloc::format!("eigen index {idx} ≥ vertex count {nv}")));
        }
        let phi: Vec<f64> = eig.vectors.column(idx).iter().copied().collect();
        let pos: Vec<f64> = phi.iter().map(|v| v.max(0.0)).collect();
        let neg: Vec<f64> = phi.iter().map(|v| (-v).max(0.0)).collect();
        let mp: f64 = surface_integral(mesh, &pos).iter().sum();
        let mn: f64 = surface_integral(mesh, &neg).iter().sum();
        let (part, mass) = if mp >= mn { (pos, mp) } else { (neg, mn) };
        if !(mass > 0.0) {
            return Err(Error::GeometricDegeneracy(alloc::format!("eigenfunction {idx} has no mass")));
        }
        for (m, v) in mix.iter_mut().zip(part) {
            *m += v / mass / indices.len() as f64;
        }
    }
    let face_mass = surface_integral(mesh, &mix);
    let total: f64 = face_mass.iter().sum();
    let face_probs = face_mass.iter().map(|m| m / total).collect();
    let vertex_values = mix.iter().map(|v| v / total).collect();
    Ok(MeshDensity { indices: indices.to_vec(), vertex_values, face_probs })
}

/// Uniform density over the surface.
pub fn mesh_uniform_density(mesh: &TriangleMesh) -> MeshDensity {
    let area = mesh.total_area();
    MeshDensity {
        indices: Vec::new(),
        vertex_values: alloc::vec![1.0 / area; mesh.vertices().len()],
        face_probs: (0..mesh.num_faces()).map(|f| mesh.face_area(f) / area).collect(),
    }
}

/// Samples with their faces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSamples {
    pub points: Vec<Vec<f64>>,
    pub faces: Vec<usize>,
}

/// Picks a face by its probability, then draws uniform barycentric
/// coordinates on it until one is accepted against the linear density with
/// the largest vertex value as envelope.
pub fn sample_mesh_density<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    density: &MeshDensity,
    count: usize,
    rng: &mut R,
) -> Result<MeshSamples> {
    if density.face_probs.len() != mesh.num_faces() || density.vertex_values.len() != mesh.vertices().len() {
        return Err(Error::InvalidParameter("density does not match the mesh".into()));
    }
    let mut cdf = Vec::with_capacity(mesh.num_faces());
    let mut acc = 0.0;
    for p in &density.face_probs {
        acc += p;
        cdf.push(acc);
    }
    let mut points = Vec::with_capacity(count);
    let mut faces = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random::<f64>() * acc;
        let mut face = cdf.partition_point(|c| *c <= u).min(cdf.len() - 1);
        while density.face_probs[face] <= 0.0 {
            face -= 1;
        }
        let f = mesh.faces()[face];
        let vals = [density.vertex_values[f[0]], density.vertex_values[f[1]], density.vertex_values[f[2]]];
        let env = vals[0].max(vals[1]).max(vals[2]);
        loop {
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let w = [1.0 - s, s * (1.0 - r2), s * r2];
            let val = w[0] * vals[0] + w[1] * vals[1] + w[2] * vals[2];
            if rng.random::<f64>() * env <= val {
                points.push(mesh.point_at(face, w).to_vec());
                faces.push(face);
                break;
            }
        }
    }
    Ok(MeshSamples { points, faces })
}

/// Gaussian noise helper for generators that need whole vectors.
pub fn gaussian_points<R: Rng + ?Sized>(dim: usize, count: usize, scale: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut v = alloc::vec![0.0; dim];
            fill_normal(rng, &mut v);
            v.iter_mut().for_each(|x| *x *= scale);
            v
        })
        .collect()
}
