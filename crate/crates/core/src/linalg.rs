//! Dense helpers that nalgebra does not provide without `std`.

#[allow(unused_imports)] // std float methods shadow it when std is linked
use num_traits::Float;
use nalgebra::DMatrix;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Modified Gram–Schmidt over the columns of `a`, in index order.
///
/// Returns `None` when a column loses more than `rel_tol` of its norm, i.e. the
/// columns are numerically dependent.
pub(crate) fn gram_schmidt(a: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let mut q = a.clone();
    for j in 0..q.ncols() {
        let original = q.column(j).norm();
        if original == 0.0 {
            return None;
        }
        for i in 0..j {
            let r = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            q.column_mut(j).axpy(-r, &qi, 1.0);
        }
        let nrm = q.column(j).norm();
        if nrm <= rel_tol * original {
            return None;
        }
        q.column_mut(j).unscale_mut(nrm);
    }
    Some(q)
}

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let ident = DMatrix::<f64>::identity(n, n);
    // 1-norm threshold for degree 13 (Higham 2005).
    const THETA13: f64 = 5.371_920_351_148_152;
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0i32;
    if norm1 > THETA13 {
        squarings = (norm1 / THETA13).log2().ceil() as i32;
    }
    let scaled = a * 2f64.powi(-squarings);
    let b = &PADE13;
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Padé denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}
