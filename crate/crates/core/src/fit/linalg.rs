//! Small dense symmetric positive-definite helpers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::std_normal;

pub(crate) struct Spd {
    chol: Cholesky<f64, Dyn>,
}

impl Spd {
    /// Factor a row-major `p x p` matrix. Fails when the matrix is
    /// numerically rank deficient after diagonal scaling.
    pub fn new(a: &[f64], p: usize, what: &str) -> Result<Self> {
        let m = DMatrix::from_row_slice(p, p, a);
        let d: Vec<f64> = (0..p).map(|i| m[(i, i)]).collect();
        if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Singular(format!("{what}: column with no information")));
        }
        let scaled = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (d[i] * d[j]).sqrt());
        let ok = scaled
            .clone()
            .cholesky()
            .map(|c| c.l().diagonal().iter().all(|v| *v > 1e-7))
            .unwrap_or(false);
        if !ok {
            return Err(Error::Singular(format!("{what}: collinear columns")));
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("{what}: not positive definite")))?;
        Ok(Spd { chol })
    }

    /// Factor without the rank check; `None` unless positive definite.
    pub fn factor(a: &[f64], p: usize) -> Option<Self> {
        DMatrix::from_row_slice(p, p, a).cholesky().map(|chol| Spd { chol })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(b)).iter().copied().collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Row-major inverse.
    pub fn inverse(&self) -> Vec<f64> {
        let inv = self.chol.inverse();
        let p = inv.nrows();
        (0..p * p).map(|k| inv[(k / p, k % p)]).collect()
    }

    /// Draw from `N(A^-1 b, A^-1)` where `A` is the factored matrix.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, b: &[f64]) -> Vec<f64> {
        let mean = self.chol.solve(&DVector::from_column_slice(b));
        let p = mean.len();
        let z = DVector::from_fn(p, |_, _| std_normal(rng));
        // L' u = z gives u ~ N(0, (L L')^-1)
        let u = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("triangular factor has a positive diagonal");
        (mean + u).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let s = Spd::new(&a, 2, "t").unwrap();
        let x = s.solve(&[1.0, 2.0]);
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        let inv = s.inverse();
        assert!((inv[0] - 3.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_is_singular() {
        let a = [1.0, 1.0, 1.0, 1.0];
        assert!(matches!(Spd::new(&a, 2, "t"), Err(Error::Singular(_))));
    }

    #[test]
    fn draws_have_requested_covariance() {
        let a = [2.0, 0.5, 0.5, 1.0];
        let s = Spd::new(&a, 2, "t").unwrap();
        let inv = s.inverse();
        let mut r = crate::rng::stream(3, &[]);
        let n = 40000;
        let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let d = s.draw(&mut r, &[0.0, 0.0]);
            s00 += d[0] * d[0];
            s11 += d[1] * d[1];
            s01 += d[0] * d[1];
        }
        let n = n as f64;
        assert!((s00 / n - inv[0]).abs() < 0.02);
        assert!((s11 / n - inv[3]).abs() < 0.03);
        assert!((s01 / n - inv[1]).abs() < 0.02);
    }
}
