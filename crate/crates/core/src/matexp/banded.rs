//! Complex banded LU factorisation with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with leading
//! dimension `2·kl + ku + 1`, element `(i, j)` at row `kl + ku + i - j`, the
//! extra `kl` rows holding fill-in from row interchanges.

use num_complex::Complex64;

use crate::ctmc::RateMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    /// Factorises `shift·I - scale·G`.
    pub fn factor_shifted(g: &impl RateMatrix, shift: Complex64, scale: f64) -> Result<Self> {
        let n = g.dim();
        let (kl, ku) = g.bandwidths();
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![Complex64::new(0.0, 0.0); ldab * n],
            pivots: vec![0; n],
        };
        let mut row = Vec::new();
        for i in 0..n {
            g.row(i, &mut row);
            for &(j, a) in &row {
                let k = lu.idx(i, j);
                lu.ab[k] -= scale * a;
            }
            let k = lu.idx(i, i);
            lu.ab[k] += shift;
        }
        lu.factor()?;
        Ok(lu)
    }

    fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut ju = 0usize;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut pivot_row = k;
            let mut best = self.ab[self.idx(k, k)].norm();
            for i in k + 1..=last {
                let mag = self.ab[self.idx(i, k)].norm();
                if mag > best {
                    best = mag;
                    pivot_row = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "banded LU breaks down at column {k}"
                )));
            }
            self.pivots[k] = pivot_row;
            ju = ju.max((pivot_row + ku).min(n - 1));
            if pivot_row != k {
                for j in k..=ju {
                    let (a, b) = (self.idx(k, j), self.idx(pivot_row, j));
                    self.ab.swap(a, b);
                }
            }
            let inv = 1.0 / self.ab[self.idx(k, k)];
            let col_k = self.idx(k + 1, k);
            let count = last - k;
            for m in &mut self.ab[col_k..col_k + count] {
                *m *= inv;
            }
            for j in k + 1..=ju {
                let akj = self.ab[self.idx(k, j)];
                if akj == Complex64::new(0.0, 0.0) {
                    continue;
                }
                // Column j starts after the multipliers of column k, so the
                // two slices never overlap.
                let target = self.idx(k + 1, j);
                let (head, tail) = self.ab.split_at_mut(target);
                for (t, &l) in tail[..count].iter_mut().zip(&head[col_k..col_k + count]) {
                    *t -= l * akj;
                }
            }
        }
        Ok(())
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == Complex64::new(0.0, 0.0) {
                continue;
            }
            let last = (k + kl).min(n - 1);
            let start = self.idx(k + 1, k);
            for (bi, &l) in b[k + 1..=last].iter_mut().zip(&self.ab[start..]) {
                *bi -= l * bk;
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.ab[self.idx(k, k)];
            let bk = b[k];
            if bk == Complex64::new(0.0, 0.0) {
                continue;
            }
            let top = k.saturating_sub(kl + ku);
            let start = self.idx(top, k);
            for (bi, &u) in b[top..k].iter_mut().zip(&self.ab[start..]) {
                *bi -= u * bk;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmc::Tridiagonal;
    use nalgebra::DMatrix;

    #[test]
    fn solves_against_dense() {
        let g = Tridiagonal::from_bands(
            vec![0.0, 4.0, -1.0, 2.0, 0.5],
            vec![0.0, -7.0, 3.0, -2.5, 0.0],
            vec![0.0, 3.0, 9.0, 0.5, 0.0],
        )
        .unwrap();
        let shift = Complex64::new(0.3, 1.7);
        let lu = BandedLu::factor_shifted(&g, shift, 2.0).unwrap();
        let dense = g.to_dense();
        let a = DMatrix::from_fn(5, 5, |i, j| {
            let d = if i == j {
                shift
            } else {
                Complex64::new(0.0, 0.0)
            };
            d - 2.0 * dense[(i, j)]
        });
        let rhs: Vec<Complex64> = (0..5)
            .map(|i| Complex64::new(i as f64 + 1.0, -0.5 * i as f64))
            .collect();
        let mut x = rhs.clone();
        lu.solve_in_place(&mut x);
        let residual =
            &a * DMatrix::from_column_slice(5, 1, &x) - DMatrix::from_column_slice(5, 1, &rhs);
        assert!(residual.iter().all(|r| r.norm() < 1e-12));
    }
}
