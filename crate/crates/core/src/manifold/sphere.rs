#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;

/// Sphere of radius `r` centred at the origin of ℝⁿ; `n = 2` is the circle.
/// The constraint is `ξ(x) = ‖x‖² − r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    dim: usize,
    radius: f64,
}

impl Sphere {
    pub fn new(ambient_dim: usize, radius: f64) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::InvalidParameter("sphere needs ambient dimension ≥ 2".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter("sphere radius must be positive".into()));
        }
        Ok(Self { dim: ambient_dim, radius })
    }

    pub fn unit(ambient_dim: usize) -> Result<Self> {
        Self::new(ambient_dim, 1.0)
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub(super) fn constraint(&self, x: &[f64]) -> f64 {
        linalg::dot(x, x) - self.radius * self.radius
    }

    pub(super) fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let nrm = linalg::norm(x);
        if nrm == 0.0 {
            return Err(Error::GeometricDegeneracy("projection of the sphere centre".into()));
        }
        Ok(x.iter().map(|v| v * self.radius / nrm).collect())
    }

    pub(super) fn exp(&self, base: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        let radial = linalg::dot(base, tangent) / self.radius;
        if radial.abs() > 1e-8 * linalg::norm(tangent).max(1.0) {
            return Err(Error::InvalidTangent { residual: radial.abs() });
        }
        let speed = linalg::norm(tangent);
        if speed == 0.0 {
            return Ok(base.to_vec());
        }
        let angle = speed / self.radius;
        let (s, c) = angle.sin_cos();
        Ok(base
            .iter()
            .zip(tangent)
            .map(|(b, v)| c * b + self.radius * s * v / speed)
            .collect())
    }
}
