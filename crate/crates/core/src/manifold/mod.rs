//! Embedded submanifolds `M = {x : ξ(x) = 0}` of ℝⁿ and the geometric
//! primitives the losses, samplers and oracles consume: the constraint value,
//! an orthonormal normal frame `N(x)`, the tangent projector `P(x) = I − N Nᵀ`,
//! the closest-point projection `π` and (where defined) the exponential map.
//!
//! `P(x)` and `N(x)` are also defined off the manifold wherever ξ is smooth;
//! for triangle meshes they are taken from the face owning `π(x)`.

mod euclidean;
mod hyperplane;
pub mod mesh;
mod son;
mod sphere;

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub use euclidean::FullSpace;
pub use hyperplane::Hyperplane;
pub use mesh::{ClosestPoint, TriangleMesh};
pub use son::SpecialOrthogonal;
pub use sphere::Sphere;

/// Tolerance on `‖ξ(x)‖` for a point to count as lying on a smooth manifold.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_TOL: f64 = 1e-10;

/// Orthonormal basis of the normal space at a point, stored as `n × (n − d)` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFrame {
    columns: DMatrix<f64>,
}

impl NormalFrame {
    pub fn new(columns: DMatrix<f64>) -> Self {
        Self { columns }
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn codim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn projection(&self) -> ProjectionMatrix {
        let n = self.columns.nrows();
        let entries = DMatrix::identity(n, n) - &self.columns * self.columns.transpose();
        ProjectionMatrix { entries }
    }

    /// `N ε` for a normal-space coefficient vector `ε`.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let e = DVector::from_column_slice(coeffs);
        (&self.columns * e).as_slice().to_vec()
    }
}

/// Symmetric tangent projector `P(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    entries: DMatrix<f64>,
}

impl ProjectionMatrix {
    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `P v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = alloc::vec![0.0; n];
        // P is symmetric, so walking columns is the same as walking rows.
        for (j, &vj) in v.iter().enumerate() {
            if vj == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.entries.column(j).iter()) {
                *o += p * vj;
            }
        }
        out
    }

    /// `(I − P) v`
    pub fn apply_normal(&self, v: &[f64]) -> Vec<f64> {
        let pv = self.apply(v);
        v.iter().zip(pv).map(|(a, b)| a - b).collect()
    }
}

/// A known embedded submanifold.
#[derive(Debug, Clone)]
pub enum Manifold {
    /// All of ℝⁿ (`π` is the identity); used to calibrate samplers.
    FullSpace(FullSpace),
    Hyperplane(Hyperplane),
    Sphere(Sphere),
    SpecialOrthogonal(SpecialOrthogonal),
    TriangleMesh(TriangleMesh),
}

impl Manifold {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::FullSpace(m) => m.dim(),
            Manifold::Hyperplane(m) => m.ambient_dim(),
            Manifold::Sphere(m) => m.ambient_dim(),
            Manifold::SpecialOrthogonal(m) => m.ambient_dim(),
            Manifold::TriangleMesh(_) => 3,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::FullSpace(m) => m.dim(),
            Manifold::Hyperplane(m) => m.intrinsic_dim(),
            Manifold::Sphere(m) => m.ambient_dim() - 1,
            Manifold::SpecialOrthogonal(m) => m.intrinsic_dim(),
            Manifold::TriangleMesh(_) => 2,
        }
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim() - self.intrinsic_dim()
    }

    pub fn is_mesh(&self) -> bool {
        matches!(self, Manifold::TriangleMesh(_))
    }

    /// ξ(x), of length `n − d`. For meshes this is the signed distance to the
    /// owning face.
    pub fn constraint_value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.ambient_dim(), x.len())?;
        Ok(match self {
            Manifold::FullSpace(_) => Vec::new(),
            Manifold::Hyperplane(m) => m.constraint(x),
            Manifold::Sphere(m) => alloc::vec![m.constraint(x)],
            Manifold::SpecialOrthogonal(m) => m.constraint(x),
            Manifold::TriangleMesh(m) => alloc::vec![m.signed_distance(x)],
        })
    }

    /// `‖ξ(x)‖`
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        Ok(linalg::norm(&self.constraint_value(x)?))
    }

    pub fn is_on(&self, x: &[f64], tol: f64) -> bool {
        self.residual(x).map(|r| r <= tol).unwrap_or(false)
    }

    /// ∇ξ(x) as an `n × (n − d)` matrix. Meshes report the owning face normal.
    pub fn constraint_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.ambient_dim(), x.len())?;
        Ok(match self {
            Manifold::FullSpace(m) => DMatrix::zeros(m.dim(), 0),
            Manifold::Hyperplane(m) => m.normals().clone(),
            Manifold::Sphere(_) => DMatrix::from_fn(x.len(), 1, |i, _| 2.0 * x[i]),
            Manifold::SpecialOrthogonal(m) => m.jacobian(x),
            Manifold::TriangleMesh(m) => {
                let n = m.face_normal(m.closest_point(x).face);
                DMatrix::from_column_slice(3, 1, &n)
            }
        })
    }

    /// Orthonormal normal frame at `x`: modified Gram–Schmidt over the columns
    /// of ∇ξ(x) in index order.
    pub fn normal_frame(&self, x: &[f64]) -> Result<NormalFrame> {
        if let Manifold::TriangleMesh(m) = self {
            check_dim(3, x.len())?;
            let n = m.face_normal(m.closest_point(x).face);
            return Ok(NormalFrame::new(DMatrix::from_column_slice(3, 1, &n)));
        }
        let jac = self.constraint_jacobian(x)?;
        if jac.ncols() == 0 {
            return Ok(NormalFrame::new(jac));
        }
        linalg::gram_schmidt(&jac, 1e-10).map(NormalFrame::new).ok_or_else(|| {
            Error::GeometricDegeneracy(format!(
                "constraint gradient is rank deficient at a point of norm {:.3e}",
                linalg::norm(x)
            ))
        })
    }

    /// `P(x) = I − N(x) N(x)ᵀ`
    pub fn projection_matrix(&self, x: &[f64]) -> Result<ProjectionMatrix> {
        if let Manifold::FullSpace(m) = self {
            check_dim(m.dim(), x.len())?;
            return Ok(ProjectionMatrix::identity(m.dim()));
        }
        Ok(self.normal_frame(x)?.projection())
    }

    /// Closest-point projection `π(x)`. Closed forms are used for every
    /// variant that has one; see [`Manifold::project_newton`] for the generic
    /// constrained Gauss–Newton route.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.ambient_dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite point".into()));
        }
        match self {
            Manifold::FullSpace(_) => Ok(x.to_vec()),
            Manifold::Hyperplane(m) => Ok(m.project(x)),
            Manifold::Sphere(m) => m.project(x),
            Manifold::SpecialOrthogonal(m) => m.project(x),
            Manifold::TriangleMesh(m) => Ok(m.closest_point(x).point.to_vec()),
        }
    }

    /// Constrained Gauss–Newton on ξ(x) = 0 along span(∇ξ):
    /// `x ← x − ∇ξ (∇ξᵀ∇ξ)⁻¹ ξ(x)`, at most 50 iterations, residual tolerance 1e-10.
    pub fn project_newton(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.is_mesh() {
            return self.project(x);
        }
        check_dim(self.ambient_dim(), x.len())?;
        let mut cur = DVector::from_column_slice(x);
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let xi = DVector::from_vec(self.constraint_value(cur.as_slice())?);
            residual = xi.norm();
            if residual <= NEWTON_TOL {
                return Ok(cur.as_slice().to_vec());
            }
            let jac = self.constraint_jacobian(cur.as_slice())?;
            let gram = jac.transpose() * &jac;
            let step = gram
                .cholesky()
                .ok_or(Error::ProjectionFailure { residual })?
                .solve(&xi);
            cur -= jac * step;
        }
        let xi = self.constraint_value(cur.as_slice())?;
        residual = residual.min(linalg::norm(&xi));
        if linalg::norm(&xi) <= NEWTON_TOL {
            Ok(cur.as_slice().to_vec())
        } else {
            Err(Error::ProjectionFailure { residual })
        }
    }

    /// Geodesic endpoint from `base` along `tangent`.
    pub fn exponential_map(&self, base: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        let n = self.ambient_dim();
        check_dim(n, base.len())?;
        check_dim(n, tangent.len())?;
        match self {
            Manifold::FullSpace(_) => Ok(base.iter().zip(tangent).map(|(a, b)| a + b).collect()),
            Manifold::Hyperplane(m) => m.exp(base, tangent),
            Manifold::Sphere(m) => m.exp(base, tangent),
            Manifold::SpecialOrthogonal(m) => m.exp(base, tangent),
            Manifold::TriangleMesh(_) => Err(Error::UnsupportedMethod(
                "exponential map is not available on triangle meshes".into(),
            )),
        }
    }

    /// Splits `v` into `(P(x) v, (I − P(x)) v)`.
    pub fn decompose(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.ambient_dim(), v.len())?;
        let p = self.projection_matrix(x)?;
        let tan = p.apply(v);
        let nor = v.iter().zip(&tan).map(|(a, b)| a - b).collect();
        Ok((tan, nor))
    }
}
