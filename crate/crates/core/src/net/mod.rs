//! Feed-forward score network over `(x, τ)` with SiLU activations and
//! hand-written reverse-mode gradients.
//!
//! Parameters live in one flat vector. Layer `l` stores its `out × in`
//! weight matrix row-major, followed by its `out` biases. The time input `τ`
//! is either `t` or `σ_t` and is appended to `x`. When rescaling is on the
//! network output `ŝ` is divided by `w_t` (see [`Method::rescale_factor`]).

pub mod optim;

use alloc::vec::Vec;
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::method::Method;
use crate::noise::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeInput {
    Time,
    Sigma,
}

/// Anything that maps `(x, t)` to an ambient score vector.
pub trait ScoreField {
    fn dim(&self) -> usize;

    /// Scores for the columns of `xs`, all at time `t`.
    fn score_batch(&self, xs: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>>;

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let xs = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.score_batch(&xs, t)?.as_slice().to_vec())
    }

    /// The objective the field was trained with, if any.
    fn method(&self) -> Option<Method> {
        None
    }
}

/// Wraps a closure `(x, t) -> s` as a [`ScoreField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScoreField for FnField<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_batch(&self, xs: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        check_dim(self.dim, xs.nrows())?;
        let mut out = DMatrix::zeros(self.dim, xs.ncols());
        for j in 0..xs.ncols() {
            let s = (self.f)(xs.column(j).as_slice(), t)?;
            check_dim(self.dim, s.len())?;
            out.column_mut(j).copy_from_slice(&s);
        }
        Ok(out)
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (self.f)(x, t)
    }
}

#[derive(Debug, Clone)]
pub struct ScoreModel {
    dims: Vec<usize>,
    params: Vec<f64>,
    method: Method,
    rescale: bool,
    time_input: TimeInput,
    schedule: NoiseSchedule,
}

/// Intermediate values kept by [`ScoreModel::forward_cached`].
pub struct ForwardCache {
    // activations[0] is the network input; pre[l] is layer l's pre-activation.
    activations: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    inv_w: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

impl ScoreModel {
    /// An MLP `n + 1 → width (× depth hidden layers) → n`, initialized with
    /// `U(−1/√fan_in, 1/√fan_in)` weights and biases.
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        width: usize,
        depth: usize,
        method: Method,
        rescale: bool,
        time_input: TimeInput,
        schedule: NoiseSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 || width == 0 || depth == 0 {
            return Err(Error::InvalidParameter("network dimensions must be positive".into()));
        }
        let mut dims = Vec::with_capacity(depth + 2);
        dims.push(n + 1);
        dims.extend(core::iter::repeat_n(width, depth));
        dims.push(n);
        let mut params = Vec::new();
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { dims, params, method, rescale, time_input, schedule })
    }

    /// Rebuilds a model from stored parts.
    pub fn from_parts(
        dims: Vec<usize>,
        params: Vec<f64>,
        method: Method,
        rescale: bool,
        time_input: TimeInput,
        schedule: NoiseSchedule,
    ) -> Result<Self> {
        if dims.len() < 2 || dims[0] != dims[dims.len() - 1] + 1 {
            return Err(Error::InvalidParameter("layer dims must start at n + 1 and end at n".into()));
        }
        let count: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        check_dim(count, params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(Self { dims, params, method, rescale, time_input, schedule })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ambient_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn training_method(&self) -> Method {
        self.method
    }

    pub fn rescale(&self) -> bool {
        self.rescale
    }

    pub fn time_input(&self) -> TimeInput {
        self.time_input
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Same network with different parameter values (e.g. the EMA shadow).
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        check_dim(self.params.len(), params.len())?;
        let mut m = self.clone();
        m.params = params;
        Ok(m)
    }

    pub fn zero_output_layer(&mut self) {
        let (off, len) = self.layer_span(self.dims.len() - 2);
        self.params[off..off + len].fill(0.0);
    }

    /// `w_t`, or 1 when rescaling is off.
    pub fn output_scale(&self, t: f64) -> Result<f64> {
        if self.rescale {
            Ok(self.method.rescale_factor(self.schedule.sigma(t)?))
        } else {
            Ok(1.0)
        }
    }

    fn layer_span(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.dims.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        (off, i * o + o)
    }

    // Wᵀ as an `in × out` column-major view, and the bias.
    fn layer(&self, l: usize) -> (DMatrixView<'_, f64>, &[f64]) {
        let (off, _) = self.layer_span(l);
        let (i, o) = (self.dims[l], self.dims[l + 1]);
        let w = DMatrixView::from_slice(&self.params[off..off + i * o], i, o);
        (w, &self.params[off + i * o..off + i * o + o])
    }

    fn inputs(&self, xs: &DMatrix<f64>, ts: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let n = self.ambient_dim();
        check_dim(n, xs.nrows())?;
        check_dim(xs.ncols(), ts.len())?;
        let mut a = DMatrix::zeros(n + 1, xs.ncols());
        let mut inv_w = Vec::with_capacity(ts.len());
        for (j, &t) in ts.iter().enumerate() {
            let sigma = self.schedule.sigma(t)?;
            a.view_mut((0, j), (n, 1)).copy_from(&xs.column(j));
            a[(n, j)] = match self.time_input {
                TimeInput::Time => t,
                TimeInput::Sigma => sigma,
            };
            inv_w.push(if self.rescale { 1.0 / self.method.rescale_factor(sigma) } else { 1.0 });
        }
        Ok((a, inv_w))
    }

    /// Scores `s(x_j, t_j)` for the columns of `xs`, plus what the backward
    /// pass needs.
    pub fn forward_cached(&self, xs: &DMatrix<f64>, ts: &[f64]) -> Result<(DMatrix<f64>, ForwardCache)> {
        let (a0, inv_w) = self.inputs(xs, ts)?;
        let layers = self.dims.len() - 1;
        let mut activations = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = a0;
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = w.tr_mul(&a);
            for mut col in z.column_iter_mut() {
                for (v, bi) in col.iter_mut().zip(b) {
                    *v += bi;
                }
            }
            let next = if l + 1 < layers { z.map(silu) } else { z.clone() };
            activations.push(core::mem::replace(&mut a, next));
            pre.push(z);
        }
        let mut out = a;
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= inv_w[j];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow);
        }
        Ok((out, ForwardCache { activations, pre, inv_w }))
    }

    /// Scores at per-column times.
    pub fn score_batch_times(&self, xs: &DMatrix<f64>, ts: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(xs, ts)?.0)
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂s` for every column.
    pub fn backward(&self, cache: &ForwardCache, dscore: &DMatrix<f64>, grad: &mut [f64]) -> Result<()> {
        check_dim(self.params.len(), grad.len())?;
        check_dim(self.ambient_dim(), dscore.nrows())?;
        check_dim(cache.inv_w.len(), dscore.ncols())?;
        let layers = self.dims.len() - 1;
        let mut delta = dscore.clone();
        for (j, mut col) in delta.column_iter_mut().enumerate() {
            col *= cache.inv_w[j];
        }
        for l in (0..layers).rev() {
            if l + 1 < layers {
                delta.zip_apply(&cache.pre[l], |d, z| *d *= silu_prime(z));
            }
            let (off, _) = self.layer_span(l);
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let a_prev = &cache.activations[l];
            {
                let (gw, gb) = grad[off..off + i * o + o].split_at_mut(i * o);
                let mut gw = DMatrixViewMut::from_slice(gw, i, o);
                gw.gemm(1.0, a_prev, &delta.transpose(), 1.0);
                for col in delta.column_iter() {
                    for (g, d) in gb.iter_mut().zip(col.iter()) {
                        *g += d;
                    }
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                delta = w * &delta;
            }
        }
        Ok(())
    }

    /// `(s(x, t), ∂s/∂x · v)` by forward-mode differentiation.
    pub fn jvp(&self, x: &[f64], t: f64, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.ambient_dim();
        check_dim(n, v.len())?;
        let xs = DMatrix::from_column_slice(n, 1, x);
        let (mut a, inv_w) = self.inputs(&xs, &[t])?;
        let mut da = DVector::zeros(n + 1);
        da.rows_mut(0, n).copy_from_slice(v);
        let mut da = DMatrix::from_column_slice(n + 1, 1, da.as_slice());
        let layers = self.dims.len() - 1;
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let mut z = w.tr_mul(&a);
            for (zi, bi) in z.iter_mut().zip(b) {
                *zi += bi;
            }
            let dz = w.tr_mul(&da);
            if l + 1 < layers {
                a = z.map(silu);
                da = dz.zip_map(&z, |d, zz| d * silu_prime(zz));
            } else {
                a = z;
                da = dz;
            }
        }
        let s = a.iter().map(|v| v * inv_w[0]).collect();
        let js = da.iter().map(|v| v * inv_w[0]).collect();
        Ok((s, js))
    }
}

impl ScoreField for ScoreModel {
    fn dim(&self) -> usize {
        self.ambient_dim()
    }

    fn score_batch(&self, xs: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
        let ts = alloc::vec![t; xs.ncols()];
        self.score_batch_times(xs, &ts)
    }

    fn method(&self) -> Option<Method> {
        Some(self.method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn tiny(method: Method, rescale: bool) -> ScoreModel {
        let s = NoiseSchedule::new(0.01, 2.0, 1.0).unwrap();
        ScoreModel::new(3, 5, 2, method, rescale, TimeInput::Time, s, &mut stream(1, "init", 0)).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_zero_scores() {
        let mut m = tiny(Method::Iso, true);
        m.zero_output_layer();
        let s = m.score(&[0.3, -1.0, 2.0], 0.4).unwrap();
        assert_eq!(s, vec![0.0; 3]);
    }

    #[test]
    fn rescaling_divides_by_w() {
        let on = tiny(Method::Niso { c: 0.2 }, true);
        let mut off = on.clone();
        off.rescale = false;
        let t = 0.3;
        let w = Method::Niso { c: 0.2 }.rescale_factor(on.schedule.sigma(t).unwrap());
        let a = on.score(&[0.1, 0.2, 0.3], t).unwrap();
        let b = off.score(&[0.1, 0.2, 0.3], t).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a[i] * w, b[i], max_relative = 1e-14);
        }
    }

    #[test]
    fn jvp_matches_finite_differences() {
        let m = tiny(Method::Iso, true);
        let x = [0.4, -0.2, 0.9];
        let v = [0.3, 0.5, -0.7];
        let (_, js) = m.jvp(&x, 0.6, &v).unwrap();
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let sp = m.score(&xp, 0.6).unwrap();
        let sm = m.score(&xm, 0.6).unwrap();
        for i in 0..3 {
            assert_relative_eq!(js[i], (sp[i] - sm[i]) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = tiny(Method::Tango { c: 0.1 }, true);
        let xs = DMatrix::from_column_slice(3, 3, &[0.1, 0.2, 0.3, -0.5, 0.4, 1.0, 0.0, -0.7, 0.2]);
        let ts = [0.1, 0.5, 0.9];
        let coef = DMatrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.2);
        // L = Σ coef ⊙ s, so ∂L/∂s = coef.
        let loss = |m: &ScoreModel| m.score_batch_times(&xs, &ts).unwrap().component_mul(&coef).sum();
        let (_, cache) = m.forward_cached(&xs, &ts).unwrap();
        let mut grad = vec![0.0; m.num_params()];
        m.backward(&cache, &coef, &mut grad).unwrap();
        let h = 1e-5;
        for k in 0..m.num_params() {
            let mut p = m.clone();
            p.params[k] += h;
            let lp = loss(&p);
            p.params[k] -= 2.0 * h;
            let lm = loss(&p);
            let fd = (lp - lm) / (2.0 * h);
            assert!((grad[k] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "param {k}: {} vs {fd}", grad[k]);
        }
    }

    #[test]
    fn overflow_is_reported() {
        let mut m = tiny(Method::Iso, false);
        m.params_mut()[0] = f64::MAX;
        let r = m.score(&[1e300, 1e300, 1e300], 0.5);
        assert!(matches!(r, Err(Error::NumericOverflow)));
    }
}
