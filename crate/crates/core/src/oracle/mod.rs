//! Reference scores: the closed-form score of the perturbed planar Gaussian
//! mixture, brute-force quadrature of `∇ log p_σ` over a discretized curve or
//! patch, circle densities with their Riemannian scores, and log-log slope fits.

pub mod theorems;

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::manifold::Manifold;

/// Isotropic mixture of planar Gaussians embedded at `z = 0` in ℝ³.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneMixture {
    pub modes: Vec<[f64; 2]>,
    pub std: f64,
}

impl PlaneMixture {
    /// Nine equally weighted modes on `{−1, 0, 1}²` with standard deviation 0.3.
    pub fn grid9() -> Self {
        let mut modes = Vec::with_capacity(9);
        for i in -1..=1 {
            for j in -1..=1 {
                modes.push([i as f64, j as f64]);
            }
        }
        Self { modes, std: 0.3 }
    }

    fn log_terms(&self, x: &[f64], sigma: f64, c: f64) -> (Vec<f64>, f64, f64) {
        let vt = self.std * self.std + sigma * sigma;
        let vn = sigma * sigma + c * c;
        let terms = self
            .modes
            .iter()
            .map(|m| {
                let dx = x[0] - m[0];
                let dy = x[1] - m[1];
                -0.5 * (dx * dx + dy * dy) / vt
            })
            .collect();
        (terms, vt, vn)
    }

    /// `log p_σ(x)` under covariance `diag(s² + σ², s² + σ², σ² + c²)` per mode.
    pub fn log_density(&self, x: &[f64], sigma: f64, c: f64) -> Result<f64> {
        check_dim(3, x.len())?;
        let (terms, vt, vn) = self.log_terms(x, sigma, c);
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
        let norm = -(self.modes.len() as f64).ln() - 1.5 * (2.0 * PI).ln() - vt.ln() - 0.5 * vn.ln();
        Ok(lse + norm - 0.5 * x[2] * x[2] / vn)
    }

    /// `∇ log p_σ(x)` with normal noise constant `c` (`c = 0` is isotropic).
    pub fn score(&self, x: &[f64], sigma: f64, c: f64) -> Result<Vec<f64>> {
        check_dim(3, x.len())?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        let (terms, vt, vn) = self.log_terms(x, sigma, c);
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut g = [0.0; 2];
        for (m, t) in self.modes.iter().zip(&terms) {
            let w = (t - max).exp();
            total += w;
            g[0] -= w * (x[0] - m[0]) / vt;
            g[1] -= w * (x[1] - m[1]) / vt;
        }
        Ok(alloc::vec![g[0] / total, g[1] / total, -x[2] / vn])
    }
}

/// Density on the unit circle as a function of the angle, with respect to arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircleDensity {
    Uniform,
    /// `∝ exp(κ cos(θ − μ))`
    VonMises { kappa: f64, mu: f64 },
    /// `∝ 1 + a cos θ`, `|a| < 1`
    Cardioid { a: f64 },
}

impl CircleDensity {
    /// Unnormalized value at angle `theta`.
    pub fn unnormalized(&self, theta: f64) -> Result<f64> {
        let v = match *self {
            CircleDensity::Uniform => 1.0,
            CircleDensity::VonMises { kappa, mu } => (kappa * (theta - mu).cos()).exp(),
            CircleDensity::Cardioid { a } => 1.0 + a * theta.cos(),
        };
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidParameter("circle density must be positive".into()))
        }
    }

    /// `d/dθ log p(θ)`
    pub fn log_derivative(&self, theta: f64) -> Result<f64> {
        let p = self.unnormalized(theta)?;
        Ok(match *self {
            CircleDensity::Uniform => 0.0,
            CircleDensity::VonMises { kappa, mu } => -kappa * (theta - mu).sin(),
            CircleDensity::Cardioid { a } => -a * theta.sin() / p,
        })
    }
}

/// Riemannian score `∇^M log p₀` at angle `theta` as an ambient vector in ℝ².
pub fn riemannian_score_circle(theta: f64, density: &CircleDensity) -> Result<Vec<f64>> {
    let d = density.log_derivative(theta)?;
    Ok(alloc::vec![-d * theta.sin(), d * theta.cos()])
}

/// A density on a discretized codimension-one manifold: points, unit normals
/// and weights `w_i = vol_i · p₀(y_i)` with `Σ w_i = 1`.
#[derive(Debug, Clone)]
pub struct QuadratureManifold {
    dim: usize,
    points: Vec<f64>,
    normals: Vec<f64>,
    log_weights: Vec<f64>,
    total_mass: f64,
}

impl QuadratureManifold {
    fn from_parts(dim: usize, points: Vec<f64>, normals: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyInput("quadrature mass"));
        }
        let log_weights = mass.iter().map(|m| (m / total).ln()).collect();
        Ok(Self { dim, points, normals, log_weights, total_mass: total })
    }

    /// Unit circle with `count` equally spaced nodes.
    pub fn circle(density: &CircleDensity, count: usize) -> Result<Self> {
        if count < 3 {
            return Err(Error::InvalidParameter("circle quadrature needs at least 3 nodes".into()));
        }
        let h = 2.0 * PI / count as f64;
        let mut points = Vec::with_capacity(2 * count);
        let mut mass = Vec::with_capacity(count);
        for i in 0..count {
            let th = i as f64 * h;
            points.extend_from_slice(&[th.cos(), th.sin()]);
            mass.push(h * density.unnormalized(th)?);
        }
        Self::from_parts(2, points.clone(), points, mass)
    }

    /// Unit circle with node spacing at most `σ / 10`.
    pub fn circle_for_sigma(density: &CircleDensity, sigma: f64) -> Result<Self> {
        let count = ((20.0 * PI / sigma).ceil() as usize).max(1024);
        Self::circle(density, count)
    }

    /// Square patch `[−half, half]²` of the plane `z = 0` in ℝ³, midpoint rule.
    pub fn plane_patch(half: f64, spacing: f64, density: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !(half > 0.0 && spacing > 0.0) {
            return Err(Error::InvalidParameter("patch size and spacing must be positive".into()));
        }
        let m = (2.0 * half / spacing).ceil() as usize;
        let h = 2.0 * half / m as f64;
        let mut points = Vec::with_capacity(3 * m * m);
        let mut normals = Vec::with_capacity(3 * m * m);
        let mut mass = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let x = -half + (i as f64 + 0.5) * h;
                let y = -half + (j as f64 + 0.5) * h;
                let p = density(x, y);
                if p > 0.0 {
                    points.extend_from_slice(&[x, y, 0.0]);
                    normals.extend_from_slice(&[0.0, 0.0, 1.0]);
                    mass.push(h * h * p);
                }
            }
        }
        Self::from_parts(3, points, normals, mass)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.dim
    }

    /// `Σ vol_i p₀(y_i)` before normalization.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `∇ log p_σ(x̃)` where `p_σ = Σ w_i N(y_i, σ² I + c² n_i n_iᵀ)`.
    pub fn score(&self, x: &[f64], sigma: f64, c: f64) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        let n = self.dim;
        let s2 = sigma * sigma;
        // Σ⁻¹ v = v/σ² − k (n·v) n
        let k = c * c / (s2 * (s2 + c * c));
        let mut logs = Vec::with_capacity(self.len());
        let mut max_kernel = f64::NEG_INFINITY;
        for i in 0..self.len() {
            let y = &self.points[i * n..(i + 1) * n];
            let nv = &self.normals[i * n..(i + 1) * n];
            let mut d2 = 0.0;
            let mut dn = 0.0;
            for a in 0..n {
                let d = x[a] - y[a];
                d2 += d * d;
                dn += d * nv[a];
            }
            let q = -0.5 * (d2 / s2 - k * dn * dn);
            max_kernel = max_kernel.max(q);
            logs.push(q + self.log_weights[i]);
        }
        if max_kernel < -700.0 {
            return Err(Error::DistanceTooFar { max_log_weight: max_kernel });
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        let mut g = alloc::vec![0.0; n];
        for i in 0..self.len() {
            let w = (logs[i] - max).exp();
            if w == 0.0 {
                continue;
            }
            total += w;
            let y = &self.points[i * n..(i + 1) * n];
            let nv = &self.normals[i * n..(i + 1) * n];
            let dn: f64 = (0..n).map(|a| (x[a] - y[a]) * nv[a]).sum();
            for a in 0..n {
                g[a] -= w * ((x[a] - y[a]) / s2 - k * dn * nv[a]);
            }
        }
        g.iter_mut().for_each(|v| *v /= total);
        Ok(g)
    }
}

/// `(P(x) v, (I − P(x)) v)`
pub fn tangential_normal_decompose(m: &Manifold, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    m.decompose(x, v)
}

/// Least-squares line through `(ln σ, ln norm)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn scale_exponent_fit(sigmas: &[f64], norms: &[f64]) -> Result<ExponentFit> {
    check_dim(sigmas.len(), norms.len())?;
    if sigmas.len() < 4 {
        return Err(Error::InvalidParameter("slope fit needs at least 4 points".into()));
    }
    if sigmas.iter().chain(norms).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("slope fit inputs must be positive".into()));
    }
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|s| s.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("slope fit needs distinct sigmas".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(ExponentFit { slope, intercept, r2 })
}

/// `count` values `10^e` with `e` evenly spaced from `hi_exp` down to `lo_exp`.
pub fn log_spaced(hi_exp: f64, lo_exp: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![10f64.powf(hi_exp)];
    }
    (0..count)
        .map(|i| 10f64.powf(hi_exp + (lo_exp - hi_exp) * i as f64 / (count - 1) as f64))
        .collect()
}

pub(crate) fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    linalg::norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}
