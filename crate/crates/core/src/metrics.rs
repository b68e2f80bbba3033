//! Two-sample metrics: Gaussian-kernel MMD, sliced and exact 1-D
//! Wasserstein-1, exact-assignment Wasserstein-2 and Jensen–Shannon divergence
//! between face histograms on a mesh.

use alloc::vec::Vec;
#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::manifold::TriangleMesh;
use crate::rng::fill_normal;

/// Largest set size accepted by [`w2`].
pub const W2_CAP: usize = 4096;
/// Default number of random directions for [`sliced_w1`].
pub const DEFAULT_DIRECTIONS: usize = 128;
const MEDIAN_SUBSAMPLE: usize = 1000;

/// Points stored row-major, `len × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput("sample set"))?;
        let dim = first.len();
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            check_dim(dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite sample".into()));
            }
            data.extend_from_slice(p);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    fn project(&self, dir: &[f64]) -> Vec<f64> {
        self.rows().map(|r| linalg::dot(r, dir)).collect()
    }
}

fn same_dim(x: &SampleSet, y: &SampleSet) -> Result<()> {
    check_dim(x.dim, y.dim)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance of the pooled sample (first 1000 pooled
    /// points in an even stride when larger).
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdValue {
    pub mmd: f64,
    pub bandwidth: f64,
}

fn canonical_order(x: &SampleSet, y: &SampleSet) -> bool {
    x.len()
        .cmp(&y.len())
        .then_with(|| x.data.iter().zip(&y.data).map(|(a, b)| a.total_cmp(b)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal))
        .is_le()
}

fn median_distance(x: &SampleSet, y: &SampleSet) -> f64 {
    let total = x.len() + y.len();
    let stride = total.div_ceil(MEDIAN_SUBSAMPLE).max(1);
    let pooled: Vec<&[f64]> = x.rows().chain(y.rows()).step_by(stride).collect();
    let mut d = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in 0..i {
            d.push(linalg::dist2(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d[d.len() / 2];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn mean_kernel(a: &SampleSet, b: &SampleSet, inv: f64) -> f64 {
    let mut s = 0.0;
    for ra in a.rows() {
        for rb in b.rows() {
            s += (-linalg::dist2(ra, rb) * inv).exp();
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Biased MMD with kernel `exp(−‖a − b‖² / (2γ²))`.
pub fn mmd(x: &SampleSet, y: &SampleSet, bandwidth: Bandwidth) -> Result<MmdValue> {
    same_dim(x, y)?;
    // Fixed argument order keeps the floating-point sums, and so the value,
    // exactly symmetric.
    let (x, y) = if canonical_order(x, y) { (x, y) } else { (y, x) };
    let gamma = match bandwidth {
        Bandwidth::Fixed(g) if g > 0.0 => g,
        Bandwidth::Fixed(g) => return Err(Error::InvalidParameter(alloc::format!("bandwidth must be positive, got {g}"))),
        Bandwidth::Median => median_distance(x, y),
    };
    let inv = 1.0 / (2.0 * gamma * gamma);
    let sq = mean_kernel(x, x, inv) + mean_kernel(y, y, inv) - 2.0 * mean_kernel(x, y, inv);
    Ok(MmdValue { mmd: sq.max(0.0).sqrt(), bandwidth: gamma })
}

/// Exact `W₁` between two empirical measures on the line, `∫ |F − G|`.
pub fn w1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("1-D sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}

/// `count` uniform random unit vectors in ℝ^dim.
pub fn random_directions<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut v = alloc::vec![0.0; dim];
        fill_normal(rng, &mut v);
        let n = linalg::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}

/// Sliced `W₁` over the given unit directions.
pub fn sliced_w1_with(x: &SampleSet, y: &SampleSet, directions: &[Vec<f64>]) -> Result<f64> {
    same_dim(x, y)?;
    if directions.is_empty() {
        return Err(Error::InvalidParameter("need at least one direction".into()));
    }
    let mut total = 0.0;
    for d in directions {
        check_dim(x.dim, d.len())?;
        total += w1_1d(&x.project(d), &y.project(d))?;
    }
    Ok(total / directions.len() as f64)
}

/// Sliced `W₁` over `n_proj` random directions drawn from `rng`.
pub fn sliced_w1<R: Rng + ?Sized>(x: &SampleSet, y: &SampleSet, n_proj: usize, rng: &mut R) -> Result<f64> {
    let dirs = random_directions(x.dim, n_proj, rng);
    sliced_w1_with(x, y, &dirs)
}

/// Minimum-cost perfect assignment for a square cost matrix (row-major),
/// by shortest augmenting paths with potentials. Returns `col_of_row`.
pub fn assignment(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = alloc::vec![0.0; n + 1];
    let mut v = alloc::vec![0.0; n + 1];
    let mut p = alloc::vec![0usize; n + 1];
    let mut way = alloc::vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = alloc::vec![inf; n + 1];
        let mut used = alloc::vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = alloc::vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// `W₂` between equal-size sets by exact assignment.
pub fn w2(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    same_dim(x, y)?;
    if x.len() != y.len() {
        return Err(Error::SizeMismatch { left: x.len(), right: y.len() });
    }
    if x.len() > W2_CAP {
        return Err(Error::SizeOverCap { size: x.len(), cap: W2_CAP });
    }
    let n = x.len();
    let mut cost = Vec::with_capacity(n * n);
    for a in x.rows() {
        for b in y.rows() {
            cost.push(linalg::dist2(a, b));
        }
    }
    let assign = assignment(&cost, n);
    let total: f64 = assign.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total / n as f64).sqrt())
}

/// Jensen–Shannon divergence (natural log) between two count histograms.
pub fn js_divergence(p: &[usize], q: &[usize]) -> Result<f64> {
    check_dim(p.len(), q.len())?;
    let sp: usize = p.iter().sum();
    let sq: usize = q.iter().sum();
    if sp == 0 || sq == 0 {
        return Err(Error::EmptyInput("histogram"));
    }
    let mut js = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let pa = a as f64 / sp as f64;
        let qb = b as f64 / sq as f64;
        let m = 0.5 * (pa + qb);
        let term = |v: f64| if v > 0.0 { v * (v / m).ln() } else { 0.0 };
        // A sum of two terms is commutative, which keeps JS exactly symmetric.
        js += 0.5 * (term(pa) + term(qb));
    }
    Ok(js.max(0.0))
}

/// Per-face counts, assigning each point to the face owning its closest point.
pub fn face_histogram(mesh: &TriangleMesh, x: &SampleSet) -> Result<Vec<usize>> {
    check_dim(3, x.dim)?;
    let mut h = alloc::vec![0usize; mesh.num_faces()];
    for r in x.rows() {
        h[mesh.closest_point(r).face] += 1;
    }
    Ok(h)
}

/// Jensen–Shannon divergence between the face histograms of `x` and `y`.
pub fn js_face_histogram(mesh: &TriangleMesh, x: &SampleSet, y: &SampleSet) -> Result<f64> {
    js_divergence(&face_histogram(mesh, x)?, &face_histogram(mesh, y)?)
}
