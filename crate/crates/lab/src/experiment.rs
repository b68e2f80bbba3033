//! End-to-end runs: data → 8:2 split → training → sampling → metrics, with
//! artifacts under `<out>/<config hash>/seed-<s>/attempt-<n>/`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use mfdiff::data::{mesh_eigen_density, random_rotation, sample_gmm_plane, sample_mesh_density, sample_wrapped_normal_son, MeshDensity};
use mfdiff::losses::{train, TrainConfig};
use mfdiff::manifold::{Hyperplane, SpecialOrthogonal, TriangleMesh};
use mfdiff::metrics::{js_face_histogram, mmd, sliced_w1, w2, Bandwidth, SampleSet, W2_CAP};
use mfdiff::net::optim::{AdamConfig, Optimizer};
use mfdiff::oracle::PlaneMixture;
use mfdiff::rng::{derive_seed, stream};
use mfdiff::sampler::{annealing_sde_chains, reverse_sde_chains, SampleConfig, SamplerKind, CHAIN_BLOCK};
use mfdiff::{Manifold, ScoreModel};
use rand::seq::SliceRandom;

use crate::checkpoint;
use crate::config::{ExperimentConfig, ManifoldKind, MetricName};
use crate::error::{io_err, LabError, Result};
use crate::io::write_points;
use crate::obj::read_obj;
use crate::report::{MetricEntry, RunReport, SeedReport};

/// Points per data-generation stream `("data", chunk)`.
const DATA_CHUNK: usize = 4096;

pub fn build_manifold(cfg: &ExperimentConfig) -> Result<Manifold> {
    Ok(match cfg.manifold {
        ManifoldKind::Hyperplane => Manifold::Hyperplane(Hyperplane::coordinate(3, 2)?),
        ManifoldKind::So => Manifold::SpecialOrthogonal(SpecialOrthogonal::new(cfg.so_k)?),
        ManifoldKind::Mesh => Manifold::TriangleMesh(load_mesh(&cfg.mesh)?),
    })
}

pub fn load_mesh(source: &str) -> Result<TriangleMesh> {
    if source == "icosahedron" {
        Ok(TriangleMesh::icosahedron())
    } else {
        read_obj(Path::new(source))
    }
}

fn mesh_of(m: &Manifold) -> Option<&TriangleMesh> {
    match m {
        Manifold::TriangleMesh(mesh) => Some(mesh),
        _ => None,
    }
}

/// Eigen density with blacklisted faces removed.
pub fn target_density(cfg: &ExperimentConfig, mesh: &TriangleMesh) -> Result<MeshDensity> {
    let mut d = mesh_eigen_density(mesh, &cfg.eigen_indices)?;
    if !cfg.face_blacklist.is_empty() {
        for &f in &cfg.face_blacklist {
            if f >= d.face_probs.len() {
                return Err(LabError::Config(format!("blacklisted face {f} out of range")));
            }
            d.face_probs[f] = 0.0;
        }
        let total: f64 = d.face_probs.iter().sum();
        if !(total > 0.0) {
            return Err(LabError::Config("face blacklist removes all mass".into()));
        }
        d.face_probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(d)
}

pub fn so_centers(cfg: &ExperimentConfig, seed: u64) -> Vec<nalgebra::DMatrix<f64>> {
    let s = cfg.so_center_seed.unwrap_or(seed);
    (0..cfg.so_modes).map(|i| random_rotation(cfg.so_k, &mut stream(s, "so-centers", i as u64))).collect()
}

pub struct Dataset {
    pub points: Vec<Vec<f64>>,
    pub faces: Option<Vec<usize>>,
    pub meta: serde_json::Value,
}

/// `cfg.dataset_size` target draws. Chunks of points come from independent
/// streams, so the result does not depend on the thread count.
pub fn generate_data(cfg: &ExperimentConfig, manifold: &Manifold, seed: u64) -> Result<Dataset> {
    let n = cfg.dataset_size;
    let chunks: Vec<(usize, usize)> = (0..n.div_ceil(DATA_CHUNK)).map(|i| (i, DATA_CHUNK.min(n - i * DATA_CHUNK))).collect();
    let rng = |i: usize| stream(seed, "data", i as u64);
    let mut meta = json!({ "seed": seed, "generator": format!("{:?}", cfg.manifold).to_lowercase(), "count": n });
    let (points, faces) = match manifold {
        Manifold::Hyperplane(_) => {
            let mix = PlaneMixture::grid9();
            meta["modes"] = json!(mix.modes);
            meta["std"] = json!(mix.std);
            let parts: Vec<_> = chunks.par_iter().map(|&(i, c)| sample_gmm_plane(&mix, c, &mut rng(i))).collect();
            (parts.concat(), None)
        }
        Manifold::SpecialOrthogonal(g) => {
            let centers = so_centers(cfg, seed);
            meta["k"] = json!(cfg.so_k);
            meta["scale"] = json!(cfg.so_scale);
            meta["center_seed"] = json!(cfg.so_center_seed.unwrap_or(seed));
            meta["centers"] = json!(centers.iter().map(SpecialOrthogonal::flatten).collect::<Vec<_>>());
            let parts = chunks
                .par_iter()
                .map(|&(i, c)| sample_wrapped_normal_son(g, &centers, cfg.so_scale, c, &mut rng(i)))
                .collect::<mfdiff::Result<Vec<_>>>()?;
            (parts.concat(), None)
        }
        Manifold::TriangleMesh(mesh) => {
            let density = target_density(cfg, mesh)?;
            meta["mesh"] = json!(cfg.mesh);
            meta["eigen_indices"] = json!(cfg.eigen_indices);
            meta["face_blacklist"] = json!(cfg.face_blacklist);
            meta["clamp"] = json!("max(phi, 0), sign with larger positive mass, equal-weight mixture");
            let parts = chunks
                .par_iter()
                .map(|&(i, c)| sample_mesh_density(mesh, &density, c, &mut rng(i)))
                .collect::<mfdiff::Result<Vec<_>>>()?;
            let mut pts = Vec::with_capacity(n);
            let mut fs = Vec::with_capacity(n);
            for p in parts {
                pts.extend(p.points);
                fs.extend(p.faces);
            }
            (pts, Some(fs))
        }
        Manifold::Sphere(_) | Manifold::FullSpace(_) => return Err(LabError::Config("no data generator for this manifold".into())),
    };
    Ok(Dataset { points, faces, meta })
}

/// 8:2 split after a shuffle from stream `("split", 0)`.
pub fn split(points: &[Vec<f64>], seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.shuffle(&mut stream(seed, "split", 0));
    let n_test = points.len() / 5;
    let test = idx[..n_test].iter().map(|&i| points[i].clone()).collect();
    let train = idx[n_test..].iter().map(|&i| points[i].clone()).collect();
    (train, test)
}

pub struct Trained {
    pub model: ScoreModel,
    pub optimizer: Optimizer,
    pub epoch_losses: Vec<f64>,
}

impl Trained {
    /// The network used for generation: EMA weights when configured.
    pub fn sampling_model(&self, use_ema: bool) -> Result<ScoreModel> {
        if use_ema {
            Ok(self.model.with_params(self.optimizer.ema().to_vec())?)
        } else {
            Ok(self.model.clone())
        }
    }
}

pub fn train_model(cfg: &ExperimentConfig, manifold: &Manifold, data: &[Vec<f64>], seed: u64) -> Result<Trained> {
    let mut model = ScoreModel::new(
        manifold.ambient_dim(),
        cfg.width,
        cfg.depth,
        cfg.method(),
        cfg.rescale,
        cfg.time_input(),
        cfg.schedule()?,
        &mut stream(seed, "init", 0),
    )?;
    let mut adam = AdamConfig::new(cfg.lr, (cfg.clip > 0.0).then_some(cfg.clip));
    adam.ema_decay = cfg.ema_decay;
    adam.ema_warmup = cfg.ema_warmup;
    let tc = TrainConfig { epochs: cfg.epochs, batch_size: cfg.batch_size, adam };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let optimizer = train(&mut model, data, manifold, &tc, derive_seed(seed, "train", 0), |_, l| epoch_losses.push(l))?;
    Ok(Trained { model, optimizer, epoch_losses })
}

pub fn sample_config(cfg: &ExperimentConfig, chains: usize, seed: u64) -> SampleConfig {
    SampleConfig {
        steps: cfg.steps,
        langevin_steps: cfg.langevin_steps,
        step_size: cfg.step_size,
        switch_sigma: cfg.switch_sigma(),
        chains,
        seed: derive_seed(seed, "sample", 0),
    }
}

/// Generates `count` points with the configured sampler, chains spread over
/// the rayon pool in whole blocks.
pub fn generate(cfg: &ExperimentConfig, model: &ScoreModel, manifold: &Manifold, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let sc = sample_config(cfg, count, seed);
    sc.validate(&schedule)?;
    let ranges: Vec<_> = (0..count).step_by(CHAIN_BLOCK).map(|s| s..(s + CHAIN_BLOCK).min(count)).collect();
    let parts = ranges
        .into_par_iter()
        .map(|r| match cfg.sampler_kind() {
            SamplerKind::ReverseSde => reverse_sde_chains(model, manifold, &schedule, &sc, r),
            SamplerKind::AnnealingSde => annealing_sde_chains(model, manifold, &schedule, &sc, r),
        })
        .collect::<mfdiff::Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// Configured metrics between generated and reference points. Metric
/// randomness comes from stream `("metric", 0)`.
pub fn evaluate(cfg: &ExperimentConfig, manifold: &Manifold, generated: &[Vec<f64>], reference: &[Vec<f64>], seed: u64) -> Result<Vec<MetricEntry>> {
    let x = SampleSet::new(generated)?;
    let y = SampleSet::new(reference)?;
    let mut out = Vec::new();
    for metric in &cfg.metrics {
        let (value, params) = match metric {
            MetricName::Mmd => {
                let bw = if cfg.mmd_bandwidth > 0.0 { Bandwidth::Fixed(cfg.mmd_bandwidth) } else { Bandwidth::Median };
                let v = mmd(&x, &y, bw)?;
                (v.mmd, json!({ "bandwidth": v.bandwidth, "median_heuristic": cfg.mmd_bandwidth <= 0.0 }))
            }
            MetricName::SlicedW1 => {
                let v = sliced_w1(&x, &y, cfg.sliced_projections, &mut stream(seed, "metric", 0))?;
                (v, json!({ "projections": cfg.sliced_projections }))
            }
            MetricName::W2 => {
                let n = generated.len().min(reference.len()).min(W2_CAP);
                let v = w2(&SampleSet::new(&generated[..n])?, &SampleSet::new(&reference[..n])?)?;
                (v, json!({ "points": n }))
            }
            MetricName::JsFaces => {
                let mesh = mesh_of(manifold).ok_or_else(|| LabError::Config("js_faces needs a mesh".into()))?;
                (js_face_histogram(mesh, &x, &y)?, json!({ "faces": mesh.num_faces() }))
            }
        };
        out.push(MetricEntry::new(cfg, seed, *metric, value, params));
    }
    Ok(out)
}

/// Lowest `attempt-<n>` under `dir` that does not exist yet.
fn next_attempt(dir: &Path) -> PathBuf {
    (0..).map(|n| dir.join(format!("attempt-{n}"))).find(|p| !p.exists()).expect("unbounded")
}

fn stage<T>(name: &'static str, seed: u64, r: Result<T>) -> Result<T> {
    r.map_err(|e| LabError::Stage { stage: name, seed, source: Box::new(e) })
}

/// One seed end to end; artifacts are written as each stage finishes, so a
/// failure leaves the earlier ones in place.
pub fn run_seed(cfg: &ExperimentConfig, manifold: &Manifold, seed: u64, dir: Option<&Path>) -> Result<SeedReport> {
    let start = Instant::now();
    let dir = match dir {
        Some(d) => {
            let d = next_attempt(&d.join(format!("seed-{seed}")));
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
            std::fs::write(d.join("config.toml"), cfg.to_toml()).map_err(io_err(d.join("config.toml")))?;
            Some(d)
        }
        None => None,
    };
    let mut artifacts = Vec::new();
    let data = stage("generate-data", seed, generate_data(cfg, manifold, seed))?;
    if let Some(d) = &dir {
        let p = d.join("dataset.csv");
        stage("generate-data", seed, write_points(&p, &data.points, data.faces.as_deref(), &data.meta))?;
        artifacts.push(p);
    }
    let (train_set, test_set) = split(&data.points, seed);
    let trained = stage("train", seed, train_model(cfg, manifold, &train_set, seed))?;
    if let Some(d) = &dir {
        let p = d.join("checkpoint.bin");
        stage("train", seed, checkpoint::save(&p, &trained.model, &trained.optimizer))?;
        artifacts.push(p);
    }
    let count = if cfg.num_samples == 0 { test_set.len() } else { cfg.num_samples };
    let model = stage("sample", seed, trained.sampling_model(cfg.use_ema))?;
    let generated = stage("sample", seed, generate(cfg, &model, manifold, count, seed))?;
    if let Some(d) = &dir {
        let p = d.join("samples.csv");
        let faces: Option<Vec<usize>> = mesh_of(manifold).map(|m| generated.iter().map(|x| m.closest_point(x).face).collect());
        let meta = json!({ "seed": seed, "sampler": cfg.sampler, "count": count, "use_ema": cfg.use_ema });
        stage("sample", seed, write_points(&p, &generated, faces.as_deref(), &meta))?;
        artifacts.push(p);
    }
    let metrics = stage("evaluate", seed, evaluate(cfg, manifold, &generated, &test_set, seed))?;
    let report = SeedReport {
        seed,
        metrics,
        final_train_loss: trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
        epoch_losses: trained.epoch_losses,
        wall_clock_s: start.elapsed().as_secs_f64(),
        artifacts,
    };
    if let Some(d) = &dir {
        let p = d.join("metrics.json");
        std::fs::write(&p, serde_json::to_string_pretty(&report)?).map_err(io_err(&p))?;
    }
    Ok(report)
}

/// All seeds of `cfg`, concurrently. With `out`, artifacts and the report go
/// under `out/<hash>/`; nothing existing is overwritten.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let manifold = build_manifold(cfg)?;
    let hash = cfg.hash();
    let root = out.map(|o| o.join(&hash));
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &manifold, s, root.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let mut report = RunReport::new(cfg, hash, seeds, start.elapsed().as_secs_f64());
    if let Some(r) = &root {
        report.path = Some(report.write_next(r)?);
    }
    Ok(report)
}
