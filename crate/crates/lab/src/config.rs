//! Flat experiment configuration with presets and `key=value` overrides.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use mfdiff::sampler::SamplerKind;
use mfdiff::{Method, NoiseSchedule, TimeInput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Hyperplane,
    So,
    Mesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Iso,
    Niso,
    Tango,
    Rssm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerName {
    Reverse,
    Annealing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeName {
    T,
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Mmd,
    SlicedW1,
    W2,
    JsFaces,
}

/// Every key has a default; files only list what they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,

    pub manifold: ManifoldKind,
    pub so_k: usize,
    pub so_modes: usize,
    pub so_scale: f64,
    /// Seed for the wrapped-normal centers; the run seed when absent.
    pub so_center_seed: Option<u64>,
    /// `icosahedron` or a path to an OBJ file.
    pub mesh: String,
    pub eigen_indices: Vec<usize>,
    pub face_blacklist: Vec<usize>,

    pub sigma_min: f64,
    pub sigma_max: f64,
    pub horizon: f64,

    pub method: MethodName,
    pub rescale: bool,
    pub c_niso: f64,
    pub c_tango: f64,

    pub width: usize,
    pub depth: usize,
    pub time_input: TimeName,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Gradient clipping threshold; 0 disables it.
    pub clip: f64,
    pub ema_decay: f64,
    /// Ramp the EMA decay up from 0.1 over the first updates.
    pub ema_warmup: bool,
    pub dataset_size: usize,
    /// Generate with the EMA weights instead of the raw ones.
    pub use_ema: bool,

    pub sampler: SamplerName,
    pub steps: usize,
    pub langevin_steps: usize,
    pub step_size: f64,
    /// Stage switch `σ̃`; defaults to the method constant, else `sigma_min`.
    pub switch_sigma: Option<f64>,
    /// Generated samples per seed; 0 means as many as the test split.
    pub num_samples: usize,

    pub metrics: Vec<MetricName>,
    /// Gaussian MMD bandwidth; 0 selects the median heuristic.
    pub mmd_bandwidth: f64,
    pub sliced_projections: usize,

    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "hyperplane".into(),
            manifold: ManifoldKind::Hyperplane,
            so_k: 10,
            so_modes: 5,
            so_scale: 0.3,
            so_center_seed: None,
            mesh: "icosahedron".into(),
            eigen_indices: vec![0, 5, 9],
            face_blacklist: Vec::new(),
            sigma_min: 0.001,
            sigma_max: 3.0,
            horizon: 1.0,
            method: MethodName::Iso,
            rescale: true,
            c_niso: 0.2,
            c_tango: 0.2,
            width: 64,
            depth: 3,
            time_input: TimeName::T,
            epochs: 200,
            batch_size: 512,
            lr: 5e-4,
            clip: 10.0,
            ema_decay: 0.999,
            ema_warmup: false,
            dataset_size: 50_000,
            use_ema: true,
            sampler: SamplerName::Reverse,
            steps: 500,
            langevin_steps: 10,
            step_size: 0.01,
            switch_sigma: None,
            num_samples: 0,
            metrics: vec![MetricName::Mmd],
            mmd_bandwidth: 0.0,
            sliced_projections: 128,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

pub const PRESETS: &[&str] = &[
    "hyperplane",
    "bunny",
    "spot",
    "so10",
    "hyperplane-desk",
    "so3-desk",
    "icosahedron-desk",
    "bunny-desk",
    "spot-desk",
];

fn mesh_preset(name: &str, mesh: &str, n0: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        manifold: ManifoldKind::Mesh,
        mesh: mesh.into(),
        eigen_indices: vec![0, 500, 1000],
        c_niso: 0.002,
        c_tango: 0.002,
        steps: 200,
        langevin_steps: n0,
        step_size: 0.05,
        width: 256,
        epochs: 20_000,
        batch_size: 4096,
        dataset_size: 60_000,
        metrics: vec![MetricName::JsFaces],
        ..Default::default()
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let cfg = match name {
        "hyperplane" => ExperimentConfig { metrics: vec![MetricName::Mmd], ..Default::default() },
        "bunny" => mesh_preset("bunny", "meshes/bunny.obj", 20),
        "spot" => mesh_preset("spot", "meshes/spot.obj", 10),
        "so10" => ExperimentConfig {
            name: "so10".into(),
            manifold: ManifoldKind::So,
            so_k: 10,
            sigma_min: 0.0005,
            c_niso: 0.01,
            c_tango: 0.05,
            step_size: 0.05,
            width: 512,
            epochs: 5000,
            lr: 1e-3,
            clip: 1.0,
            metrics: vec![MetricName::SlicedW1, MetricName::W2],
            ..Default::default()
        },
        "hyperplane-desk" => ExperimentConfig {
            name: "hyperplane-desk".into(),
            ema_warmup: true,
            epochs: 100,
            batch_size: 64,
            dataset_size: 10_000,
            num_samples: 10_000,
            seeds: vec![1, 2, 3],
            ..preset("hyperplane")?
        },
        "so3-desk" => ExperimentConfig {
            name: "so3-desk".into(),
            ema_warmup: true,
            so_k: 3,
            so_modes: 3,
            width: 64,
            epochs: 100,
            batch_size: 64,
            dataset_size: 10_000,
            num_samples: 10_000,
            metrics: vec![MetricName::SlicedW1],
            seeds: vec![1, 2, 3],
            ..preset("so10")?
        },
        "icosahedron-desk" => ExperimentConfig {
            name: "icosahedron-desk".into(),
            ema_warmup: true,
            mesh: "icosahedron".into(),
            eigen_indices: vec![0, 5, 9],
            method: MethodName::Tango,
            sampler: SamplerName::Annealing,
            c_niso: 0.05,
            c_tango: 0.05,
            width: 64,
            epochs: 600,
            batch_size: 256,
            lr: 5e-5,
            dataset_size: 10_000,
            seeds: vec![1, 2, 3],
            ..mesh_preset("icosahedron-desk", "icosahedron", 10)
        },
        "bunny-desk" | "spot-desk" => {
            let base = if name == "bunny-desk" { "bunny" } else { "spot" };
            ExperimentConfig {
                name: name.into(),
                mesh: format!("meshes/{base}-decimated.obj"),
                ema_warmup: true,
                eigen_indices: vec![0, 20, 40],
                width: 128,
                epochs: 200,
                batch_size: 1024,
                dataset_size: 20_000,
                seeds: vec![1, 2, 3],
                ..preset(base)?
            }
        }
        other => return Err(LabError::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", ")))),
    };
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides; values use TOML syntax, bare words are
    /// read as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, sets: &[S]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| LabError::Config(e.to_string()))?;
        for s in sets {
            let s = s.as_ref();
            let (k, v) = s.split_once('=').ok_or_else(|| LabError::Config(format!("override {s:?} is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(v.to_string()),
            };
            table.insert(k.to_string(), value);
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// SHA-256 over the canonical (key-sorted) JSON of everything except
    /// `name` and `seeds`, so runs with new seeds share a directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let map = v.as_object_mut().expect("config is an object");
        map.remove("name");
        map.remove("seeds");
        let canonical = serde_json::to_string(&v).expect("json");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn method(&self) -> Method {
        match self.method {
            MethodName::Iso => Method::Iso,
            MethodName::Niso => Method::Niso { c: self.c_niso },
            MethodName::Tango => Method::Tango { c: self.c_tango },
            MethodName::Rssm => Method::Rssm,
        }
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            SamplerName::Reverse => SamplerKind::ReverseSde,
            SamplerName::Annealing => SamplerKind::AnnealingSde,
        }
    }

    pub fn time_input(&self) -> TimeInput {
        match self.time_input {
            TimeName::T => TimeInput::Time,
            TimeName::Sigma => TimeInput::Sigma,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.sigma_min, self.sigma_max, self.horizon)?)
    }

    pub fn switch_sigma(&self) -> f64 {
        self.switch_sigma.or_else(|| self.method().default_switch_sigma()).unwrap_or(self.sigma_min)
    }

    /// Checks that need no data: ranges, counts and method/sampler pairing.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if matches!(self.method, MethodName::Tango) && matches!(self.sampler, SamplerName::Reverse) {
            return Err(mfdiff::Error::UnsupportedMethod(
                "the reverse SDE is not applicable to Tango-trained models; use sampler = \"annealing\"".into(),
            )
            .into());
        }
        let positive = [
            ("width", self.width),
            ("depth", self.depth),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("dataset_size", self.dataset_size),
            ("steps", self.steps),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(LabError::Config(format!("{k} must be positive")));
            }
        }
        if self.dataset_size < 5 {
            return Err(LabError::Config("dataset_size must allow an 8:2 split".into()));
        }
        if !(self.lr > 0.0) || self.clip < 0.0 || !(0.0..1.0).contains(&self.ema_decay) {
            return Err(LabError::Config("lr must be positive, clip nonnegative and ema_decay in [0, 1)".into()));
        }
        if self.seeds.is_empty() {
            return Err(LabError::Config("at least one seed is required".into()));
        }
        if self.metrics.contains(&MetricName::JsFaces) && self.manifold != ManifoldKind::Mesh {
            return Err(LabError::Config("js_faces needs a mesh manifold".into()));
        }
        for c in [self.c_niso, self.c_tango] {
            if !(0.0..1.0).contains(&c) {
                return Err(LabError::Config(format!("method constants must lie in [0, 1), got {c}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates_or_explains() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            cfg.validate().unwrap();
        }
        assert!(preset("torus").is_err());
    }

    #[test]
    fn table_values_are_in_the_presets() {
        let so = preset("so10").unwrap();
        assert_eq!((so.sigma_min, so.c_niso, so.c_tango, so.width, so.lr, so.clip), (0.0005, 0.01, 0.05, 512, 1e-3, 1.0));
        let bunny = preset("bunny").unwrap();
        assert_eq!((bunny.langevin_steps, bunny.batch_size, bunny.dataset_size), (20, 4096, 60_000));
    }

    #[test]
    fn hash_ignores_key_order_and_seeds() {
        let a = ExperimentConfig::from_toml("lr = 0.001\nwidth = 32\nseeds = [1]").unwrap();
        let b = ExperimentConfig::from_toml("seeds = [7, 8]\nwidth = 32\nlr = 0.001").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml("lr = 0.002\nwidth = 32").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::default()
            .with_overrides(&["method = niso", "c_niso=0.05", "seeds = [4, 5]", "switch_sigma = 0.1"])
            .unwrap();
        assert_eq!(cfg.method(), Method::Niso { c: 0.05 });
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.switch_sigma(), 0.1);
        assert!(ExperimentConfig::default().with_overrides(&["nonsense = 1"]).is_err());
        assert!(ExperimentConfig::default().with_overrides(&["width"]).is_err());
    }

    #[test]
    fn tango_with_reverse_is_rejected_up_front() {
        let cfg = ExperimentConfig { method: MethodName::Tango, sampler: SamplerName::Reverse, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(LabError::Core(mfdiff::Error::UnsupportedMethod(_)))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("widht = 3").is_err());
    }
}
