//! Geometric VE noise schedule and the isotropic / normal-inflated
//! perturbation kernels.
//!
//! The normal-inflated kernel is parameterized by the constant `c = σ^α`
//! directly, so its covariance is `Σ = σ² I + c² N Nᵀ`. With `P = I − N Nᵀ`,
//! `Σ⁻¹ = P / σ² + (I − P) / (σ² + c²)` and
//! `det Σ = σ^{2d} (σ² + c²)^{n−d}`.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::manifold::{Manifold, ProjectionMatrix};
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
    horizon: f64,
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, horizon: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_max > sigma_min && sigma_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got {sigma_min} and {sigma_max}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { sigma_min, sigma_max, horizon })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, horizon: self.horizon })
        }
    }

    /// `σ_t = σ_min (σ_max / σ_min)^{t/T}`
    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.sigma_min * (self.sigma_max / self.sigma_min).powf(t / self.horizon))
    }

    /// `g(t)² = dσ_t²/dt = 2 σ_t² ln(σ_max/σ_min) / T`
    pub fn g_squared(&self, t: f64) -> Result<f64> {
        let s = self.sigma(t)?;
        Ok(2.0 * s * s * (self.sigma_max / self.sigma_min).ln() / self.horizon)
    }

    /// Inverse of [`Self::sigma`], clamped to `[0, T]`.
    pub fn time_of_sigma(&self, sigma: f64) -> f64 {
        let r = (sigma / self.sigma_min).ln() / (self.sigma_max / self.sigma_min).ln();
        (r * self.horizon).clamp(0.0, self.horizon)
    }
}

/// `x + σ ε`
pub fn perturb_iso<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    x.iter().map(|&xi| xi + sigma * standard_normal(rng)).collect()
}

/// The fixed normal-noise constant `c_niso`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NisoParams {
    c: f64,
}

impl NisoParams {
    /// `0 ≤ c < 1`; `c = 0` reduces to isotropic noise.
    pub fn new(c: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("c_niso must lie in [0, 1), got {c}")));
        }
        Ok(Self { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Diagnostic exponent `α = ln c / ln σ`, defined for `0 < σ < 1` and `0 < c < 1`.
    pub fn alpha(&self, sigma: f64) -> Result<f64> {
        alpha(sigma, self.c)
    }
}

pub fn alpha(sigma: f64, c: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0 && c > 0.0 && c < 1.0) {
        return Err(Error::InvalidAlpha { sigma, c });
    }
    Ok(c.ln() / sigma.ln())
}

/// `x + σ ε₁ + c N(x) ε₂` with `x` on the manifold.
pub fn perturb_niso<R: Rng + ?Sized>(
    m: &Manifold,
    x: &[f64],
    sigma: f64,
    params: NisoParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(m.ambient_dim(), x.len())?;
    let frame = m.normal_frame(x)?;
    let mut out = perturb_iso(x, sigma, rng);
    let eps2: Vec<f64> = (0..frame.codim()).map(|_| standard_normal(rng)).collect();
    for (o, v) in out.iter_mut().zip(frame.combine(&eps2)) {
        *o += params.c * v;
    }
    Ok(out)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")))
    }
}

/// `Σ⁻¹ v` at `x`, where `c` is the normal-noise constant.
pub fn sigma_inverse_apply(m: &Manifold, x: &[f64], sigma: f64, c: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(m.ambient_dim(), v.len())?;
    let p = m.projection_matrix(x)?;
    sigma_inverse_apply_with(&p, sigma, c, v)
}

/// `Σ⁻¹ v` for a precomputed projector.
pub fn sigma_inverse_apply_with(p: &ProjectionMatrix, sigma: f64, c: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    check_dim(p.dim(), v.len())?;
    let s2 = sigma * sigma;
    let tan = 1.0 / s2;
    let nor = 1.0 / (s2 + c * c);
    let pv = p.apply(v);
    Ok(v.iter().zip(pv).map(|(&vi, pi)| tan * pi + nor * (vi - pi)).collect())
}

/// `Σ v` for a precomputed projector.
pub fn sigma_apply_with(p: &ProjectionMatrix, sigma: f64, c: f64, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.dim(), v.len())?;
    let s2 = sigma * sigma;
    let pv = p.apply(v);
    Ok(v.iter().zip(pv).map(|(&vi, pi)| s2 * vi + c * c * (vi - pi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaDet {
    pub det: f64,
    pub log_det: f64,
}

/// Determinant of `Σ = σ² I + c² N Nᵀ` for an `n`-dimensional ambient space
/// and a `d`-dimensional manifold.
pub fn sigma_det(sigma: f64, c: f64, n: usize, d: usize) -> Result<SigmaDet> {
    check_sigma(sigma)?;
    if d > n {
        return Err(Error::InvalidParameter(format!("intrinsic dim {d} exceeds ambient dim {n}")));
    }
    let log_det = 2.0 * d as f64 * sigma.ln() + (n - d) as f64 * (sigma * sigma + c * c).ln();
    Ok(SigmaDet { det: log_det.exp(), log_det })
}
