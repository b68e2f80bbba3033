//! Run reports as JSON. Every metric entry carries the full configuration it
//! was measured under.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use mfdiff::oracle::theorems::{TheoremConfig, TheoremReport};

use crate::config::{ExperimentConfig, MetricName};
use crate::error::{io_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: MetricName,
    pub value: f64,
    pub seed: u64,
    pub method: String,
    pub rescale: bool,
    pub sampler: String,
    /// Metric settings plus the complete configuration.
    pub hyperparameters: serde_json::Value,
}

impl MetricEntry {
    pub fn new(cfg: &ExperimentConfig, seed: u64, metric: MetricName, value: f64, params: serde_json::Value) -> Self {
        Self {
            metric,
            value,
            seed,
            method: cfg.method().to_string(),
            rescale: cfg.rescale,
            sampler: format!("{:?}", cfg.sampler).to_lowercase(),
            hyperparameters: json!({ "metric": params, "config": cfg }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub metrics: Vec<MetricEntry>,
    pub final_train_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub wall_clock_s: f64,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        let median = if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) };
        Self { mean, std, median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedReport>,
    pub summary: BTreeMap<String, Summary>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub path: Option<PathBuf>,
}

impl RunReport {
    pub fn new(cfg: &ExperimentConfig, config_hash: String, seeds: Vec<SeedReport>, wall_clock_s: f64) -> Self {
        let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in &seeds {
            for m in &s.metrics {
                let key = serde_json::to_value(m.metric).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                by_metric.entry(key).or_default().push(m.value);
            }
        }
        let summary = by_metric.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect();
        Self { name: cfg.name.clone(), config_hash, config: cfg.clone(), seeds, summary, wall_clock_s, path: None }
    }

    pub fn values(&self, metric: MetricName) -> Vec<f64> {
        self.seeds.iter().flat_map(|s| s.metrics.iter().filter(|m| m.metric == metric).map(|m| m.value)).collect()
    }

    /// Writes `report-<n>.json` with the first unused `n` and returns its path.
    pub fn write_next(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let text = serde_json::to_string_pretty(self)?;
        let mut n = 0;
        loop {
            let p = dir.join(format!("report-{n}.json"));
            match std::fs::OpenOptions::new().write(true).create_new(true).open(&p) {
                Ok(mut f) => {
                    use std::io::Write;
                    f.write_all(text.as_bytes()).map_err(io_err(&p))?;
                    return Ok(p);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(io_err(&p)(e)),
            }
        }
    }
}

/// Theorem sweep results in report form.
pub fn theorem_json(cfg: &TheoremConfig, r: &TheoremReport, wall_clock_s: f64) -> serde_json::Value {
    let rows = |rows: &[mfdiff::oracle::theorems::SweepRow]| {
        rows.iter()
            .map(|r| json!({ "sigma": r.sigma, "normal_norm": r.normal_norm, "expected_normal": r.expected_normal, "tangential_error": r.tangential_error }))
            .collect::<Vec<_>>()
    };
    let fit = |f: &mfdiff::oracle::ExponentFit| json!({ "slope": f.slope, "intercept": f.intercept, "r2": f.r2 });
    json!({
        "settings": {
            "density": format!("{:?}", cfg.density),
            "iso_sigmas": cfg.iso_sigmas,
            "niso_sigmas": cfg.niso_sigmas,
            "c_niso": cfg.c_niso,
            "iso_offset": cfg.iso_offset,
            "niso_offset": cfg.niso_offset,
            "probe_angle": cfg.probe_angle,
            "grid_angles": cfg.grid_angles,
        },
        "iso_sweep": rows(&r.iso),
        "niso_sweep": rows(&r.niso),
        "normal_fit": fit(&r.normal_fit),
        "tangential_fit_iso": fit(&r.tangential_fit_iso),
        "tangential_fit_niso": fit(&r.tangential_fit_niso),
        "niso_normal_rel_error": r.niso_normal_rel_error,
        "checks": r.checks.iter().map(|c| json!({ "name": c.name, "value": c.value, "requirement": c.requirement, "pass": c.pass })).collect::<Vec<_>>(),
        "all_pass": r.all_pass(),
        "wall_clock_s": wall_clock_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[3.0, 1.0, 2.0]);
        assert_eq!((s.mean, s.median, s.std), (2.0, 2.0, 1.0));
        assert_eq!(Summary::of(&[1.0, 4.0]).median, 2.5);
        assert_eq!(Summary::of(&[5.0]).std, 0.0);
    }

    #[test]
    fn reports_never_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let r = RunReport::new(&ExperimentConfig::default(), "abc".into(), Vec::new(), 0.0);
        let a = r.write_next(dir.path()).unwrap();
        let b = r.write_next(dir.path()).unwrap();
        assert_ne!(a, b);
        assert!(a.ends_with("report-0.json") && b.ends_with("report-1.json"));
    }
}
