//! Generation: the reverse SDE with a terminal projection, and the two-stage
//! annealing sampler whose second stage runs projected Langevin dynamics at
//! each remaining time tick.
//!
//! Every chain owns the random stream `("chain", index)` of the configured
//! seed. Chains advance in lockstep blocks so the score network sees batches;
//! results do not depend on how chains are later split across threads.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;
use nalgebra::DMatrix;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::manifold::Manifold;
use crate::method::Method;
use crate::net::ScoreField;
use crate::noise::NoiseSchedule;
use crate::rng::{fill_normal, stream};

/// Chains advanced together per score evaluation.
pub const CHAIN_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    ReverseSde,
    AnnealingSde,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Reverse-SDE steps `N`; `Δt = T / N`.
    pub steps: usize,
    /// Langevin steps `n₀` per stage-2 tick.
    pub langevin_steps: usize,
    /// Langevin step size `α_ld`.
    pub step_size: f64,
    /// Stage switch threshold `σ̃`.
    pub switch_sigma: f64,
    pub chains: usize,
    pub seed: u64,
}

impl SampleConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("sampler needs at least one step".into()));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("Langevin step size must be ≥ 0, got {}", self.step_size)));
        }
        if !(schedule.sigma_min() <= self.switch_sigma && self.switch_sigma <= schedule.sigma_max()) {
            return Err(Error::InvalidParameter(format!(
                "switch sigma {} outside [{}, {}]",
                self.switch_sigma,
                schedule.sigma_min(),
                schedule.sigma_max()
            )));
        }
        Ok(())
    }

    fn time(&self, schedule: &NoiseSchedule, k: usize) -> f64 {
        schedule.horizon() * (self.steps - k) as f64 / self.steps as f64
    }
}

struct Block {
    first: usize,
    x: DMatrix<f64>,
    rngs: Vec<ChaCha8Rng>,
}

impl Block {
    fn start(n: usize, chains: Range<usize>, schedule: &NoiseSchedule, seed: u64) -> Self {
        let first = chains.start;
        let mut rngs: Vec<ChaCha8Rng> = chains.map(|i| stream(seed, "chain", i as u64)).collect();
        let mut x = DMatrix::zeros(n, rngs.len());
        let mut z = alloc::vec![0.0; n];
        for (j, rng) in rngs.iter_mut().enumerate() {
            fill_normal(rng, &mut z);
            for i in 0..n {
                x[(i, j)] = schedule.sigma_max() * z[i];
            }
        }
        Self { first, x, rngs }
    }

    fn fail(&self, j: usize, t: f64, e: Error) -> Error {
        Error::ChainFailure { chain: self.first + j, t, source: Box::new(e) }
    }

    // x ← x + g² s Δt + g √Δt z
    fn reverse_step<F: ScoreField + ?Sized>(&mut self, field: &F, schedule: &NoiseSchedule, t: f64, dt: f64) -> Result<()> {
        let s = field.score_batch(&self.x, t)?;
        let g2 = schedule.g_squared(t)?;
        let noise = (g2 * dt).sqrt();
        let n = self.x.nrows();
        let mut z = alloc::vec![0.0; n];
        for (j, rng) in self.rngs.iter_mut().enumerate() {
            fill_normal(rng, &mut z);
            for i in 0..n {
                self.x[(i, j)] += g2 * s[(i, j)] * dt + noise * z[i];
            }
        }
        Ok(())
    }

    fn project(&mut self, manifold: &Manifold, t: f64) -> Result<()> {
        for j in 0..self.x.ncols() {
            let p = manifold.project(self.x.column(j).as_slice()).map_err(|e| self.fail(j, t, e))?;
            self.x.column_mut(j).copy_from_slice(&p);
        }
        Ok(())
    }

    fn langevin_sweep<F: ScoreField + ?Sized>(&mut self, field: &F, manifold: &Manifold, t: f64, alpha: f64) -> Result<()> {
        let s = field.score_batch(&self.x, t)?;
        for j in 0..self.x.ncols() {
            let x = self.x.column(j).as_slice().to_vec();
            let next = match langevin_update(manifold, &x, s.column(j).as_slice(), alpha, &mut self.rngs[j]) {
                Ok(v) => v,
                // One retry from the pre-step state with fresh noise.
                Err(_) => langevin_update(manifold, &x, s.column(j).as_slice(), alpha, &mut self.rngs[j])
                    .map_err(|e| self.fail(j, t, e))?,
            };
            self.x.column_mut(j).copy_from_slice(&next);
        }
        Ok(())
    }

    fn into_points(self) -> Vec<Vec<f64>> {
        self.x.column_iter().map(|c| c.as_slice().to_vec()).collect()
    }
}

// x' = x + α P s + √(2α) P z, then π(x').
fn langevin_update<R: Rng + ?Sized>(manifold: &Manifold, x: &[f64], s: &[f64], alpha: f64, rng: &mut R) -> Result<Vec<f64>> {
    let p = manifold.projection_matrix(x)?;
    let mut z = alloc::vec![0.0; x.len()];
    fill_normal(rng, &mut z);
    let pz = p.apply(&z);
    let ps = p.apply(s);
    let scale = (2.0 * alpha).sqrt();
    let moved: Vec<f64> = (0..x.len()).map(|i| x[i] + alpha * ps[i] + scale * pz[i]).collect();
    manifold.project(&moved)
}

/// One projected Langevin step from `x` (on the manifold) at time `t`.
pub fn projected_langevin_step<F: ScoreField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    manifold: &Manifold,
    x: &[f64],
    t: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dim(manifold.ambient_dim(), x.len())?;
    let s = field.score(x, t)?;
    langevin_update(manifold, x, &s, alpha, rng)
}

fn check_field<F: ScoreField + ?Sized>(field: &F, manifold: &Manifold) -> Result<()> {
    check_dim(manifold.ambient_dim(), field.dim())
}

fn blocks(chains: Range<usize>) -> impl Iterator<Item = Range<usize>> {
    let end = chains.end;
    chains.step_by(CHAIN_BLOCK).map(move |s| s..(s + CHAIN_BLOCK).min(end))
}

/// Reverse SDE for all `cfg.chains` chains.
pub fn reverse_sde_sample<F: ScoreField + ?Sized>(
    field: &F,
    manifold: &Manifold,
    schedule: &NoiseSchedule,
    cfg: &SampleConfig,
) -> Result<Vec<Vec<f64>>> {
    reverse_sde_chains(field, manifold, schedule, cfg, 0..cfg.chains)
}

/// Reverse SDE for the chains with indices in `chains`.
pub fn reverse_sde_chains<F: ScoreField + ?Sized>(
    field: &F,
    manifold: &Manifold,
    schedule: &NoiseSchedule,
    cfg: &SampleConfig,
    chains: Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    if let Some(Method::Tango { .. }) = field.method() {
        return Err(Error::UnsupportedMethod(
            "the reverse SDE is not applicable to Tango-trained models; use the annealing sampler".into(),
        ));
    }
    check_field(field, manifold)?;
    cfg.validate(schedule)?;
    let dt = schedule.horizon() / cfg.steps as f64;
    let mut out = Vec::with_capacity(chains.len());
    for range in blocks(chains) {
        let mut b = Block::start(manifold.ambient_dim(), range, schedule, cfg.seed);
        for k in 0..cfg.steps {
            b.reverse_step(field, schedule, cfg.time(schedule, k), dt)?;
        }
        b.project(manifold, 0.0)?;
        out.extend(b.into_points());
    }
    Ok(out)
}

/// Annealing sampler for all `cfg.chains` chains.
pub fn annealing_sde_sample<F: ScoreField + ?Sized>(
    field: &F,
    manifold: &Manifold,
    schedule: &NoiseSchedule,
    cfg: &SampleConfig,
) -> Result<Vec<Vec<f64>>> {
    annealing_sde_chains(field, manifold, schedule, cfg, 0..cfg.chains)
}

/// Annealing sampler for the chains with indices in `chains`.
pub fn annealing_sde_chains<F: ScoreField + ?Sized>(
    field: &F,
    manifold: &Manifold,
    schedule: &NoiseSchedule,
    cfg: &SampleConfig,
    chains: Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    check_field(field, manifold)?;
    cfg.validate(schedule)?;
    let dt = schedule.horizon() / cfg.steps as f64;
    let mut out = Vec::with_capacity(chains.len());
    for range in blocks(chains) {
        let mut b = Block::start(manifold.ambient_dim(), range, schedule, cfg.seed);
        let mut k = 0;
        while k < cfg.steps && schedule.sigma(cfg.time(schedule, k))? >= cfg.switch_sigma {
            b.reverse_step(field, schedule, cfg.time(schedule, k), dt)?;
            k += 1;
        }
        b.project(manifold, cfg.time(schedule, k))?;
        for k in k..cfg.steps {
            let t = cfg.time(schedule, k);
            for _ in 0..cfg.langevin_steps {
                b.langevin_sweep(field, manifold, t, cfg.step_size)?;
            }
        }
        out.extend(b.into_points());
    }
    Ok(out)
}

/// `steps` projected Langevin steps at fixed `t` from each starting point.
/// Chain `j` uses stream `("langevin", j)`.
pub fn langevin_at_fixed_time<F: ScoreField + ?Sized>(
    field: &F,
    manifold: &Manifold,
    init: &[Vec<f64>],
    t: f64,
    steps: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_field(field, manifold)?;
    let n = manifold.ambient_dim();
    let mut out = Vec::with_capacity(init.len());
    for (bi, chunk) in init.chunks(CHAIN_BLOCK).enumerate() {
        let first = bi * CHAIN_BLOCK;
        let mut x = DMatrix::zeros(n, chunk.len());
        for (j, p) in chunk.iter().enumerate() {
            check_dim(n, p.len())?;
            x.column_mut(j).copy_from_slice(&manifold.project(p)?);
        }
        let rngs = (first..first + chunk.len()).map(|i| stream(seed, "langevin", i as u64)).collect();
        let mut b = Block { first, x, rngs };
        for _ in 0..steps {
            b.langevin_sweep(field, manifold, t, alpha)?;
        }
        out.extend(b.into_points());
    }
    Ok(out)
}
