//! Training objectives: denoising score matching, the normal-inflated
//! variant, the Tango/DSM mix and the sliced implicit baseline.
//!
//! Every loss is a function of a batch and the model's scores on it, and
//! returns the scalar loss together with `∂L/∂s` so the same code serves
//! analytic fields and network training.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::manifold::Manifold;
use crate::method::Method;
use crate::net::optim::{AdamConfig, Optimizer};
use crate::net::{ScoreField, ScoreModel};
use crate::noise::{perturb_iso, perturb_niso, sigma_inverse_apply, NisoParams, NoiseSchedule};
use crate::rng::{fill_normal, stream};

/// A training batch. Columns of `x` are clean points, columns of `xt` their
/// perturbations at the per-sample times `t`.
#[derive(Debug, Clone)]
pub struct LossBatch {
    pub method: Method,
    pub x: DMatrix<f64>,
    pub xt: DMatrix<f64>,
    pub t: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Hutchinson probes (RSSM only), one column per sample.
    pub probes: Option<DMatrix<f64>>,
}

/// Loss value and its gradient with respect to the evaluated scores.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub dscore: DMatrix<f64>,
}

impl LossBatch {
    /// Samples `t ~ U[0, T)` per point and perturbs with the kernel that
    /// matches `method`.
    pub fn draw<R: Rng + ?Sized>(
        data: &[Vec<f64>],
        indices: &[usize],
        method: Method,
        rescale: bool,
        schedule: &NoiseSchedule,
        manifold: &Manifold,
        rng: &mut R,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        let n = manifold.ambient_dim();
        let b = indices.len();
        let mut x = DMatrix::zeros(n, b);
        let mut xt = DMatrix::zeros(n, b);
        let mut t = Vec::with_capacity(b);
        let mut sigma = Vec::with_capacity(b);
        let mut lambda = Vec::with_capacity(b);
        let mut probes = matches!(method, Method::Rssm).then(|| DMatrix::zeros(n, b));
        for (j, &i) in indices.iter().enumerate() {
            let p = &data[i];
            check_dim(n, p.len())?;
            let ti = rng.random::<f64>() * schedule.horizon();
            let s = schedule.sigma(ti)?;
            let pert = match method {
                Method::Iso | Method::Tango { .. } => perturb_iso(p, s, rng),
                Method::Niso { c } => perturb_niso(manifold, p, s, NisoParams::new(c)?, rng)?,
                Method::Rssm => manifold.project(&perturb_iso(p, s, rng))?,
            };
            if let Some(z) = probes.as_mut() {
                let mut col = alloc::vec![0.0; n];
                fill_normal(rng, &mut col);
                z.column_mut(j).copy_from_slice(&col);
            }
            x.column_mut(j).copy_from_slice(p);
            xt.column_mut(j).copy_from_slice(&pert);
            t.push(ti);
            sigma.push(s);
            lambda.push(method.lambda(s, rescale));
        }
        Ok(Self { method, x, xt, t, sigma, lambda, probes })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn check_scores(&self, scores: &DMatrix<f64>) -> Result<()> {
        check_dim(self.x.nrows(), scores.nrows())?;
        check_dim(self.len(), scores.ncols())
    }

    fn displacement(&self, j: usize) -> Vec<f64> {
        (self.xt.column(j) - self.x.column(j)).as_slice().to_vec()
    }
}

/// Evaluates `field` at every `(xt_j, t_j)` of the batch.
pub fn field_scores<F: ScoreField + ?Sized>(field: &F, batch: &LossBatch) -> Result<DMatrix<f64>> {
    let n = batch.x.nrows();
    let mut out = DMatrix::zeros(n, batch.len());
    for j in 0..batch.len() {
        let s = field.score(batch.xt.column(j).as_slice(), batch.t[j])?;
        check_dim(n, s.len())?;
        out.column_mut(j).copy_from_slice(&s);
    }
    Ok(out)
}

// Adds λ‖r‖²/B to the loss and 2λr/B to the gradient column.
fn accumulate(eval: &mut LossEval, j: usize, lambda: f64, r: &[f64], b: f64) {
    eval.loss += lambda * linalg::dot(r, r) / b;
    for (g, ri) in eval.dscore.column_mut(j).iter_mut().zip(r) {
        *g += 2.0 * lambda * ri / b;
    }
}

fn empty_eval(batch: &LossBatch) -> LossEval {
    LossEval { loss: 0.0, dscore: DMatrix::zeros(batch.x.nrows(), batch.len()) }
}

fn dsm_residual(batch: &LossBatch, scores: &DMatrix<f64>, j: usize) -> Vec<f64> {
    let s2 = batch.sigma[j] * batch.sigma[j];
    batch.displacement(j).iter().zip(scores.column(j).iter()).map(|(d, s)| s + d / s2).collect()
}

/// Mean of `λ‖s(x̃, t) + (x̃ − x)/σ²‖²`.
pub fn dsm_loss(batch: &LossBatch, scores: &DMatrix<f64>) -> Result<LossEval> {
    batch.check_scores(scores)?;
    let mut eval = empty_eval(batch);
    let b = batch.len() as f64;
    for j in 0..batch.len() {
        let r = dsm_residual(batch, scores, j);
        accumulate(&mut eval, j, batch.lambda[j], &r, b);
    }
    Ok(eval)
}

/// Mean of `λ‖s(x̃, t) + Σ(x)⁻¹(x̃ − x)‖²` with `Σ = σ² I + c² N Nᵀ`.
pub fn niso_loss(batch: &LossBatch, scores: &DMatrix<f64>, manifold: &Manifold, c: f64) -> Result<LossEval> {
    batch.check_scores(scores)?;
    let mut eval = empty_eval(batch);
    let b = batch.len() as f64;
    for j in 0..batch.len() {
        let target = sigma_inverse_apply(manifold, batch.x.column(j).as_slice(), batch.sigma[j], c, &batch.displacement(j))?;
        let r: Vec<f64> = scores.column(j).iter().zip(&target).map(|(s, g)| s + g).collect();
        accumulate(&mut eval, j, batch.lambda[j], &r, b);
    }
    Ok(eval)
}

/// Per sample: the DSM term when `σ ≥ c`, otherwise
/// `λ‖P(x̃)(s(x̃, t) + (x̃ − x)/σ²)‖²`.
pub fn tango_loss(batch: &LossBatch, scores: &DMatrix<f64>, manifold: &Manifold, c: f64) -> Result<LossEval> {
    batch.check_scores(scores)?;
    let mut eval = empty_eval(batch);
    let b = batch.len() as f64;
    for j in 0..batch.len() {
        let r = dsm_residual(batch, scores, j);
        if batch.sigma[j] >= c {
            accumulate(&mut eval, j, batch.lambda[j], &r, b);
        } else {
            let p = manifold.projection_matrix(batch.xt.column(j).as_slice())?;
            accumulate(&mut eval, j, batch.lambda[j], &p.apply(&r), b);
        }
    }
    Ok(eval)
}

/// Finite-difference step used by [`rssm_loss`] at point `x`.
pub fn rssm_step(x: &[f64]) -> f64 {
    1e-4 * (1.0 + linalg::norm(x))
}

/// Scores and directions the sliced loss needs: `v_j = P(x̃_j) z_j` and the
/// shifted evaluation points `x̃_j ± h_j v_j`.
pub struct RssmPoints {
    pub v: DMatrix<f64>,
    pub h: Vec<f64>,
    pub plus: DMatrix<f64>,
    pub minus: DMatrix<f64>,
}

pub fn rssm_points(batch: &LossBatch, manifold: &Manifold) -> Result<RssmPoints> {
    let z = batch.probes.as_ref().ok_or(Error::InvalidParameter("batch carries no probes".into()))?;
    let (n, b) = batch.xt.shape();
    let mut v = DMatrix::zeros(n, b);
    let mut plus = batch.xt.clone();
    let mut minus = batch.xt.clone();
    let mut h = Vec::with_capacity(b);
    for j in 0..b {
        let xj = batch.xt.column(j);
        let p = manifold.projection_matrix(xj.as_slice())?;
        let vj = p.apply(z.column(j).as_slice());
        let hj = rssm_step(xj.as_slice());
        for i in 0..n {
            v[(i, j)] = vj[i];
            plus[(i, j)] += hj * vj[i];
            minus[(i, j)] -= hj * vj[i];
        }
        h.push(hj);
    }
    Ok(RssmPoints { v, h, plus, minus })
}

/// Mean of `λ(‖s(x̃)‖² + 2 vᵀ(s(x̃ + hv) − s(x̃ − hv))/(2h))`, one Hutchinson
/// probe per sample. Returns the gradients for the three score matrices.
pub fn rssm_loss(
    batch: &LossBatch,
    pts: &RssmPoints,
    s0: &DMatrix<f64>,
    s_plus: &DMatrix<f64>,
    s_minus: &DMatrix<f64>,
) -> Result<(LossEval, DMatrix<f64>, DMatrix<f64>)> {
    batch.check_scores(s0)?;
    batch.check_scores(s_plus)?;
    batch.check_scores(s_minus)?;
    let b = batch.len() as f64;
    let mut eval = empty_eval(batch);
    let mut dp = DMatrix::zeros(s0.nrows(), s0.ncols());
    let mut dm = DMatrix::zeros(s0.nrows(), s0.ncols());
    for j in 0..batch.len() {
        let lam = batch.lambda[j];
        let s = s0.column(j);
        let v = pts.v.column(j);
        let div = v.dot(&(s_plus.column(j) - s_minus.column(j))) / pts.h[j];
        eval.loss += lam * (s.norm_squared() + div) / b;
        eval.dscore.column_mut(j).copy_from(&(s * (2.0 * lam / b)));
        dp.column_mut(j).copy_from(&(v * (lam / (pts.h[j] * b))));
        dm.column_mut(j).copy_from(&(v * (-lam / (pts.h[j] * b))));
    }
    Ok((eval, dp, dm))
}

/// Loss of `model` on `batch` and its parameter gradient.
pub fn loss_and_grad(model: &ScoreModel, batch: &LossBatch, manifold: &Manifold) -> Result<(f64, Vec<f64>)> {
    if model.training_method() != batch.method {
        return Err(Error::InvalidParameter("batch was drawn for a different method".into()));
    }
    let mut grad = alloc::vec![0.0; model.num_params()];
    let (scores, cache) = model.forward_cached(&batch.xt, &batch.t)?;
    let eval = match batch.method {
        Method::Iso => dsm_loss(batch, &scores)?,
        Method::Niso { c } => niso_loss(batch, &scores, manifold, c)?,
        Method::Tango { c } => tango_loss(batch, &scores, manifold, c)?,
        Method::Rssm => {
            let pts = rssm_points(batch, manifold)?;
            let (sp, cp) = model.forward_cached(&pts.plus, &batch.t)?;
            let (sm, cm) = model.forward_cached(&pts.minus, &batch.t)?;
            let (eval, dp, dm) = rssm_loss(batch, &pts, &scores, &sp, &sm)?;
            model.backward(&cp, &dp, &mut grad)?;
            model.backward(&cm, &dm, &mut grad)?;
            eval
        }
    };
    model.backward(&cache, &eval.dscore, &mut grad)?;
    Ok((eval.loss, grad))
}

/// Gradient of `Σ λ_j ‖s(x_j, t_j) − target_j‖² / B` with respect to the parameters.
pub fn score_grad(
    model: &ScoreModel,
    xs: &DMatrix<f64>,
    ts: &[f64],
    targets: &DMatrix<f64>,
    lambda: &[f64],
) -> Result<Vec<f64>> {
    if ts.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    check_dim(ts.len(), lambda.len())?;
    check_dim(xs.ncols(), targets.ncols())?;
    check_dim(xs.nrows(), targets.nrows())?;
    let (scores, cache) = model.forward_cached(xs, ts)?;
    let b = ts.len() as f64;
    let mut d = scores - targets;
    for (j, mut col) in d.column_iter_mut().enumerate() {
        col *= 2.0 * lambda[j] / b;
    }
    let mut grad = alloc::vec![0.0; model.num_params()];
    model.backward(&cache, &d, &mut grad)?;
    Ok(grad)
}

/// One optimizer step on `batch`; returns the loss before the update.
pub fn train_step(model: &mut ScoreModel, opt: &mut Optimizer, batch: &LossBatch, manifold: &Manifold) -> Result<f64> {
    let (loss, mut grad) = loss_and_grad(model, batch, manifold)?;
    opt.apply(model.params_mut(), &mut grad, loss)?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

/// Epoch loop over `data`: shuffled with stream `("shuffle", epoch)`, each
/// batch perturbed with stream `("batch", step)`. `on_epoch` receives the
/// epoch index and mean loss.
pub fn train(
    model: &mut ScoreModel,
    data: &[Vec<f64>],
    manifold: &Manifold,
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Optimizer> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let mut opt = Optimizer::new(cfg.adam, model.params());
    let schedule = *model.schedule();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream(seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut rng = stream(seed, "batch", step);
            let batch = LossBatch::draw(data, chunk, model.training_method(), model.rescale(), &schedule, manifold, &mut rng)?;
            total += train_step(model, &mut opt, &batch, manifold)?;
            count += 1;
            step += 1;
        }
        on_epoch(epoch, total / count as f64);
    }
    Ok(opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Hyperplane;
    use crate::net::{FnField, TimeInput};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn plane() -> Manifold {
        Manifold::Hyperplane(Hyperplane::coordinate(3, 2).unwrap())
    }

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::new(0.001, 3.0, 1.0).unwrap()
    }

    fn single(method: Method, x: [f64; 3], xt: [f64; 3], sigma: f64, lambda: f64) -> LossBatch {
        LossBatch {
            method,
            x: DMatrix::from_column_slice(3, 1, &x),
            xt: DMatrix::from_column_slice(3, 1, &xt),
            t: vec![schedule().time_of_sigma(sigma)],
            sigma: vec![sigma],
            lambda: vec![lambda],
            probes: None,
        }
    }

    #[test]
    fn hand_computed_dsm() {
        let b = single(Method::Iso, [0.0; 3], [0.1, 0.0, -0.2], 0.5, 0.25);
        let s = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        // residual = s + (x̃ − x)/σ² = (1.4, 1, 0.2)
        let e = dsm_loss(&b, &s).unwrap();
        assert_relative_eq!(e.loss, 0.25 * (1.96 + 1.0 + 0.04), max_relative = 1e-14);
    }

    #[test]
    fn zero_field_dsm_expectation_is_ambient_dim() {
        let data: Vec<Vec<f64>> = (0..20000).map(|i| vec![(i % 7) as f64 * 0.1, 0.0, 0.0]).collect();
        let idx: Vec<usize> = (0..data.len()).collect();
        let b = LossBatch::draw(&data, &idx, Method::Iso, false, &schedule(), &plane(), &mut stream(1, "t", 0)).unwrap();
        let e = dsm_loss(&b, &DMatrix::zeros(3, b.len())).unwrap();
        assert_relative_eq!(e.loss, 3.0, max_relative = 0.03);
    }

    #[test]
    fn niso_target_normal_component() {
        let (sigma, c, h) = (0.1, 0.2, 0.05);
        let b = single(Method::Niso { c }, [0.0; 3], [0.0, 0.0, h], sigma, 1.0);
        let target = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, -h / (sigma * sigma + c * c)]);
        assert!(niso_loss(&b, &target, &plane(), c).unwrap().loss < 1e-24);
    }

    #[test]
    fn niso_with_zero_c_equals_dsm() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.01, -0.3, 0.0]).collect();
        let idx: Vec<usize> = (0..50).collect();
        let b = LossBatch::draw(&data, &idx, Method::Niso { c: 0.0 }, false, &schedule(), &plane(), &mut stream(2, "t", 0)).unwrap();
        let s = DMatrix::from_fn(3, 50, |i, j| (i * j) as f64 * 0.01);
        assert_eq!(niso_loss(&b, &s, &plane(), 0.0).unwrap().loss, dsm_loss(&b, &s).unwrap().loss);
    }

    #[test]
    fn tango_switch_and_normal_blindness() {
        let m = plane();
        let c = 0.2;
        // σ = c takes the DSM branch, so the normal residual counts.
        let b = single(Method::Tango { c }, [0.0; 3], [0.0, 0.0, 0.0], c, 1.0);
        let s = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 5.0]);
        assert_eq!(tango_loss(&b, &s, &m, c).unwrap().loss, 25.0);
        // Below c only the tangential residual counts.
        let b = single(Method::Tango { c }, [0.0; 3], [0.01, 0.02, 0.03], 0.1, 1.0);
        let tangential = DMatrix::from_column_slice(3, 1, &[-1.0, -2.0, 0.0]);
        let junk = DMatrix::from_column_slice(3, 1, &[-1.0, -2.0, 123.0]);
        assert!(tango_loss(&b, &tangential, &m, c).unwrap().loss < 1e-24);
        assert!(tango_loss(&b, &junk, &m, c).unwrap().loss < 1e-24);
    }

    #[test]
    fn rssm_zero_field_and_linear_trace() {
        let m = plane();
        let data = vec![vec![0.1, 0.2, 0.0]; 100_000];
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut b = LossBatch::draw(&data, &idx, Method::Rssm, false, &schedule(), &m, &mut stream(4, "t", 0)).unwrap();
        b.lambda.iter_mut().for_each(|l| *l = 1.0);
        let pts = rssm_points(&b, &m).unwrap();
        let zero = DMatrix::zeros(3, b.len());
        assert_eq!(rssm_loss(&b, &pts, &zero, &zero, &zero).unwrap().0.loss, 0.0);
        // s(x) = x: the divergence term estimates 2 trace(P) = 4.
        let (eval, _, _) = rssm_loss(&b, &pts, &zero, &pts.plus, &pts.minus).unwrap();
        assert_relative_eq!(eval.loss, 4.0, max_relative = 0.02);
    }

    #[test]
    fn score_grad_zero_at_target_and_linear_in_lambda() {
        let s = schedule();
        let model = ScoreModel::new(3, 4, 1, Method::Iso, true, TimeInput::Time, s, &mut stream(1, "init", 0)).unwrap();
        let xs = DMatrix::from_column_slice(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let ts = [0.2, 0.7];
        let out = model.score_batch_times(&xs, &ts).unwrap();
        let g = score_grad(&model, &xs, &ts, &out, &[1.0, 1.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        let target = DMatrix::zeros(3, 2);
        let g1 = score_grad(&model, &xs, &ts, &target, &[1.0, 0.5]).unwrap();
        let g2 = score_grad(&model, &xs, &ts, &target, &[2.0, 1.0]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn analytic_field_scores_match() {
        let f = FnField::new(3, |x: &[f64], _t: f64| Ok(x.iter().map(|v| -v).collect()));
        let b = single(Method::Iso, [0.0; 3], [0.1, 0.2, 0.3], 0.5, 1.0);
        let s = field_scores(&f, &b).unwrap();
        assert_eq!(s.as_slice(), &[-0.1, -0.2, -0.3]);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let m = plane();
        let data: Vec<Vec<f64>> = (0..256).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), 0.0]).collect();
        let cfg = TrainConfig { epochs: 30, batch_size: 64, adam: AdamConfig::new(5e-3, Some(10.0)) };
        let method = Method::Niso { c: 0.2 };
        let idx: Vec<usize> = (0..data.len()).collect();
        let eval = LossBatch::draw(&data, &idx, method, true, &schedule(), &m, &mut stream(9, "eval", 0)).unwrap();
        let run = || {
            let mut model = ScoreModel::new(3, 16, 2, method, true, TimeInput::Time, schedule(), &mut stream(5, "init", 0)).unwrap();
            let before = loss_and_grad(&model, &eval, &m).unwrap().0;
            let mut losses = Vec::new();
            train(&mut model, &data, &m, &cfg, 5, |_, l| losses.push(l)).unwrap();
            (before, loss_and_grad(&model, &eval, &m).unwrap().0, losses)
        };
        let (before, after, a) = run();
        assert_eq!(a, run().2);
        assert!(after < before, "{before} -> {after}");
    }
}
