//! Banded symmetric positive-definite factorization.
//!
//! The Neumann stencils become symmetric after scaling each row by its
//! boundary factor, with half-bandwidth 1 in 1D and `n + 1` in 2D. A dense
//! band Cholesky is exact and cheap at these sizes.

use crate::{Error, Result};

/// Symmetric band matrix stored by rows: `band[i * (bw + 1) + k]` holds
/// `A[i][i - k]` for `k = 0..=bw`.
#[derive(Clone, Debug)]
pub(crate) struct BandMatrix {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            band: vec![0.0; n * (bw + 1)],
        }
    }

    /// Adds `v` to `A[i][j]` with `j <= i`.
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        self.band[i * (self.bw + 1) + (i - j)] += v;
    }

    #[inline]
    fn at(&self, i: usize, k: usize) -> f64 {
        self.band[i * (self.bw + 1) + k]
    }

    /// In-place band Cholesky `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                // A[i][j] - Σ_k L[i][k] L[j][k]
                let mut s = self.at(i, i - j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= self.band[i * stride + (i - k)] * self.band[j * stride + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::SingularSystem { row: i, pivot: s });
                    }
                    self.band[i * stride] = s.sqrt();
                } else {
                    self.band[i * stride + (i - j)] = s / self.band[j * stride];
                }
            }
        }
        Ok(BandCholesky {
            n,
            bw,
            l: self.band,
        })
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * stride + (i - k)] * b[k];
            }
            b[i] = s / self.l[i * stride];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * stride + (k - i)] * b[k];
            }
            b[i] = s / self.l[i * stride];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_band_system() {
        // Tridiagonal [4 -1; -1 4 -1; ...] against a dense reference.
        let n = 6;
        let mut a = BandMatrix::zeros(n, 2);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            a.add_lower(i, i, 5.0);
            dense[i][i] = 5.0;
            if i >= 1 {
                a.add_lower(i, i - 1, -1.0);
                dense[i][i - 1] = -1.0;
                dense[i - 1][i] = -1.0;
            }
            if i >= 2 {
                a.add_lower(i, i - 2, 0.5);
                dense[i][i - 2] = 0.5;
                dense[i - 2][i] = 0.5;
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| dense[i][j] * x_true[j]).sum())
            .collect();
        a.cholesky().unwrap().solve_in_place(&mut b);
        for (x, y) in b.iter().zip(&x_true) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = BandMatrix::zeros(2, 1);
        a.add_lower(0, 0, 1.0);
        a.add_lower(1, 0, 2.0);
        a.add_lower(1, 1, 1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::SingularSystem { row: 1, .. })
        ));
    }
}
