//! SO(k) embedded in ℝ^{k²} (row-major flattening). The constraint collects
//! the upper-triangular entries (`i ≤ j`, row by row) of `Q Qᵀ − I`.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::expm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialOrthogonal {
    k: usize,
}

impl SpecialOrthogonal {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter("SO(k) needs k ≥ 2".into()));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ambient_dim(&self) -> usize {
        self.k * self.k
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.k * (self.k - 1) / 2
    }

    pub fn to_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.k, self.k, x)
    }

    pub fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
        m.transpose().as_slice().to_vec()
    }

    pub(super) fn constraint(&self, x: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(k * (k + 1) / 2);
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for b in 0..k {
                    s += x[i * k + b] * x[j * k + b];
                }
                out.push(if i == j { s - 1.0 } else { s });
            }
        }
        out
    }

    /// `∂(QQᵀ)_{ij}/∂Q_{ab} = δ_{ia} Q_{jb} + δ_{ja} Q_{ib}`, one column per `(i ≤ j)`.
    pub(super) fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.k;
        let mut jac = DMatrix::zeros(k * k, k * (k + 1) / 2);
        let mut col = 0;
        for i in 0..k {
            for j in i..k {
                for b in 0..k {
                    jac[(i * k + b, col)] += x[j * k + b];
                    jac[(j * k + b, col)] += x[i * k + b];
                }
                col += 1;
            }
        }
        jac
    }

    /// Polar factor `U Vᵀ` of the SVD, with the least significant direction
    /// flipped when needed so the result has determinant +1.
    pub(super) fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = self.to_matrix(x);
        let svd = m.svd(true, true);
        let mut u = svd.u.ok_or(Error::ProjectionFailure { residual: f64::NAN })?;
        let v_t = svd.v_t.ok_or(Error::ProjectionFailure { residual: f64::NAN })?;
        let mut q = &u * &v_t;
        if q.determinant() < 0.0 {
            let (weakest, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
            u.column_mut(weakest).neg_mut();
            q = &u * &v_t;
        }
        Ok(Self::flatten(&q))
    }

    /// `Q expm(A)` where the tangent is `Q A` with `A` skew-symmetric.
    pub(super) fn exp(&self, base: &[f64], tangent: &[f64]) -> Result<Vec<f64>> {
        let residual = crate::linalg::norm(&self.constraint(base));
        if residual > 1e-8 {
            return Err(Error::InvalidParameter(alloc::format!(
                "exponential-map base is not in SO(k) (residual {residual:.3e})"
            )));
        }
        let q = self.to_matrix(base);
        let a = q.transpose() * self.to_matrix(tangent);
        let asym = (&a + a.transpose()).norm() / 2.0;
        if asym > 1e-8 * a.norm().max(1.0) {
            return Err(Error::InvalidTangent { residual: asym });
        }
        let skew = (&a - a.transpose()) * 0.5;
        Ok(Self::flatten(&(q * expm(&skew))))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Manifold;
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn identity_satisfies_constraint() {
        let so3 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(3).unwrap());
        let id = SpecialOrthogonal::flatten(&DMatrix::identity(3, 3));
        assert_eq!(so3.constraint_value(&id).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn so2_constraint_is_upper_triangle_of_gram_minus_identity() {
        // [[1, 0.1], [0, 1]] gives QQᵀ − I = [[0.01, 0.1], [0.1, 0]].
        let so2 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(2).unwrap());
        let xi = so2.constraint_value(&[1.0, 0.1, 0.0, 1.0]).unwrap();
        assert_relative_eq!(xi[0], 0.01, epsilon = 1e-15);
        assert_relative_eq!(xi[1], 0.1, epsilon = 1e-15);
        assert_relative_eq!(xi[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projector_trace_equals_dimension_at_identity() {
        let so3 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(3).unwrap());
        let id = SpecialOrthogonal::flatten(&DMatrix::identity(3, 3));
        let p = so3.projection_matrix(&id).unwrap();
        assert_relative_eq!(p.trace(), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn quarter_turn_exponential() {
        let so2 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(2).unwrap());
        let theta = core::f64::consts::FRAC_PI_2;
        let out = so2
            .exponential_map(&[1.0, 0.0, 0.0, 1.0], &[0.0, -theta, theta, 0.0])
            .unwrap();
        let want = [0.0, -1.0, 1.0, 0.0];
        for (a, b) in out.iter().zip(&want) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
        assert!(so2.residual(&out).unwrap() <= 1e-8);
    }

    #[test]
    fn zero_tangent_returns_base_and_non_tangent_is_rejected() {
        let so3 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(3).unwrap());
        let id = SpecialOrthogonal::flatten(&DMatrix::identity(3, 3));
        assert_eq!(so3.exponential_map(&id, &[0.0; 9]).unwrap(), id);
        let mut sym = [0.0; 9];
        sym[1] = 0.5;
        sym[3] = 0.5;
        assert!(matches!(so3.exponential_map(&id, &sym), Err(Error::InvalidTangent { .. })));
    }

    #[test]
    fn polar_projection_fixes_reflections() {
        let so3 = Manifold::SpecialOrthogonal(SpecialOrthogonal::new(3).unwrap());
        let x = [1.1, 0.1, 0.0, 0.0, 0.9, 0.2, 0.0, 0.1, -1.0];
        let q = so3.project(&x).unwrap();
        assert!(so3.residual(&q).unwrap() < 1e-12);
        assert!(so3.to_matrix_det(&q) > 0.0);
    }

    impl Manifold {
        fn to_matrix_det(&self, x: &[f64]) -> f64 {
            match self {
                Manifold::SpecialOrthogonal(m) => m.to_matrix(x).determinant(),
                _ => unreachable!(),
            }
        }
    }
}
