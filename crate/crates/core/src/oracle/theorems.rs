//! σ-sweeps on the unit circle checking the small-noise behaviour of the
//! perturbed score: the normal component blows up like `δ/σ²` under
//! isotropic noise and saturates at `δ/(σ² + c²)` with normal-inflated noise,
//! while the tangential component converges to the Riemannian score of `p₀`.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;

use super::{log_spaced, max_norm_diff, riemannian_score_circle, scale_exponent_fit, CircleDensity, ExponentFit, QuadratureManifold};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConfig {
    pub density: CircleDensity,
    pub iso_sigmas: Vec<f64>,
    pub niso_sigmas: Vec<f64>,
    pub c_niso: f64,
    /// Radial offset `δ` of the off-manifold probe in the isotropic sweep.
    pub iso_offset: f64,
    /// Radial offset in the normal-inflated sweep; must be large against
    /// `c²` since the curvature contributes an O(1) normal term.
    pub niso_offset: f64,
    pub probe_angle: f64,
    /// On-manifold angles where the tangential error is measured.
    pub grid_angles: usize,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            density: CircleDensity::VonMises { kappa: 1.0, mu: 0.3 },
            iso_sigmas: log_spaced(-1.5, -3.0, 6),
            niso_sigmas: log_spaced(-2.0, -3.0, 6),
            c_niso: 0.05,
            iso_offset: 0.02,
            niso_offset: 0.2,
            probe_angle: 1.0,
            grid_angles: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub sigma: f64,
    /// `‖(I − P) ∇ log p_σ(x̃)‖` at the off-manifold probe.
    pub normal_norm: f64,
    /// `δ / (σ² + c²)`
    pub expected_normal: f64,
    /// `max_θ ‖P ∇ log p_σ − ∇^M log p₀‖` over on-manifold grid points.
    pub tangential_error: f64,
}

/// One sweep with normal noise constant `c` (0 for isotropic).
pub fn circle_sweep(
    density: &CircleDensity,
    sigmas: &[f64],
    c: f64,
    offset: f64,
    probe_angle: f64,
    grid_angles: usize,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let q = QuadratureManifold::circle_for_sigma(density, sigma)?;
        let (ct, st) = (probe_angle.cos(), probe_angle.sin());
        let r = 1.0 + offset;
        let s = q.score(&[r * ct, r * st], sigma, c)?;
        let normal_norm = (s[0] * ct + s[1] * st).abs();
        let mut tangential_error: f64 = 0.0;
        for j in 0..grid_angles {
            let th = 2.0 * PI * (j as f64 + 0.5) / grid_angles as f64;
            let (cj, sj) = (th.cos(), th.sin());
            let s = q.score(&[cj, sj], sigma, c)?;
            let tan = -s[0] * sj + s[1] * cj;
            let proj = [-tan * sj, tan * cj];
            let err = max_norm_diff(&proj, &riemannian_score_circle(th, density)?);
            tangential_error = tangential_error.max(err);
        }
        rows.push(SweepRow { sigma, normal_norm, expected_normal: offset / (sigma * sigma + c * c), tangential_error });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub requirement: &'static str,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub iso: Vec<SweepRow>,
    pub niso: Vec<SweepRow>,
    pub normal_fit: ExponentFit,
    pub tangential_fit_iso: ExponentFit,
    pub tangential_fit_niso: ExponentFit,
    /// Largest `|normal/expected − 1|` in the normal-inflated sweep.
    pub niso_normal_rel_error: f64,
    pub checks: Vec<Check>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn fit(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> Result<ExponentFit> {
    let s: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let v: Vec<f64> = rows.iter().map(f).collect();
    scale_exponent_fit(&s, &v)
}

pub fn verify_theorems(cfg: &TheoremConfig) -> Result<TheoremReport> {
    let iso = circle_sweep(&cfg.density, &cfg.iso_sigmas, 0.0, cfg.iso_offset, cfg.probe_angle, cfg.grid_angles)?;
    let niso = circle_sweep(&cfg.density, &cfg.niso_sigmas, cfg.c_niso, cfg.niso_offset, cfg.probe_angle, cfg.grid_angles)?;
    let normal_fit = fit(&iso, |r| r.normal_norm)?;
    let tangential_fit_iso = fit(&iso, |r| r.tangential_error)?;
    let tangential_fit_niso = fit(&niso, |r| r.tangential_error)?;
    let niso_normal_rel_error = niso
        .iter()
        .map(|r| (r.normal_norm / r.expected_normal - 1.0).abs())
        .fold(0.0, f64::max);
    let checks = alloc::vec![
        Check {
            name: "iso normal slope",
            value: normal_fit.slope,
            requirement: "in [-2.1, -1.9]",
            pass: (-2.1..=-1.9).contains(&normal_fit.slope),
        },
        Check { name: "iso normal fit R^2", value: normal_fit.r2, requirement: ">= 0.999", pass: normal_fit.r2 >= 0.999 },
        Check {
            name: "iso tangential exponent",
            value: tangential_fit_iso.slope,
            requirement: ">= 0.9",
            pass: tangential_fit_iso.slope >= 0.9,
        },
        Check {
            name: "niso normal relative error",
            value: niso_normal_rel_error,
            requirement: "<= 0.02",
            pass: niso_normal_rel_error <= 0.02,
        },
        Check {
            name: "niso tangential exponent",
            value: tangential_fit_niso.slope,
            requirement: ">= 0.9",
            pass: tangential_fit_niso.slope >= 0.9,
        },
    ];
    Ok(TheoremReport { iso, niso, normal_fit, tangential_fit_iso, tangential_fit_niso, niso_normal_rel_error, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_report_passes() {
        let r = verify_theorems(&TheoremConfig::default()).unwrap();
        assert!(r.all_pass(), "{:?}", r.checks);
    }
}
