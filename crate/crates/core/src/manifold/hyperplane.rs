use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Affine subspace `{x : Nᵀ(x − o) = 0}` with orthonormal normals `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    origin: DVector<f64>,
    normals: DMatrix<f64>,
}

impl Hyperplane {
    /// `normals` is `n × (n − d)`; the columns are orthonormalized in order.
    pub fn new(origin: Vec<f64>, normals: DMatrix<f64>) -> Result<Self> {
        if normals.nrows() != origin.len() {
            return Err(Error::DimensionMismatch { expected: origin.len(), got: normals.nrows() });
        }
        if normals.ncols() == 0 || normals.ncols() >= origin.len() {
            return Err(Error::InvalidParameter("hyperplane codimension must be in [1, n)".into()));
        }
        let normals = linalg::gram_schmidt(&normals, 1e-10).ok_or_else(|| {
            Error::GeometricDegeneracy("hyperplane normals are linearly dependent".into())
        })?;
        Ok(Self { origin: DVector::from_vec(origin), normals })
    }

    /// `{x ∈ ℝⁿ : x_d = … = x_{n−1} = 0}`
    pub fn coordinate(n: usize, d: usize) -> Result<Self> {
        if d == 0 || d >= n {
            return Err(Error::InvalidParameter("need 0 < d < n".into()));
        }
        let normals = DMatrix::from_fn(n, n - d, |i, j| if i == d + j { 1.0 } else { 0.0 });
        Ok(Self { origin: DVector::zeros(n), normals })
    }

    pub fn ambient_dim(&self) -> usize {
        self.origin.len()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.origin.len() - self.normals.ncols()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub(super) fn constraint(&self, x: &[f64]) -> Vec<f64> {
        let d = DVector::from_column_slice(x) - &self.origin;
        (self.normals.transpose() * d).as_slice().to_vec()
    }

    pub(super) fn project(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let c = self.normals.transpose() * (&xv - &self.origin);
        (xv - &self.normals * c).as_slice().to_vec()
    }

    pub(super) fn exp(&self, base: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        let off = (self.normals.transpose() * DVector::from_column_slice(tangent)).norm();
        if off > 1e-8 * linalg::norm(tangent).max(1.0) {
            return Err(Error::InvalidTangent { residual: off });
        }
        Ok(base.iter().zip(tangent).map(|(a, b)| a + b).collect())
    }
}
