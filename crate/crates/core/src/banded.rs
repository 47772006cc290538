//! Banded LU without pivoting, for the M-matrices produced by the finite-difference
//! operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    /// Half-bandwidth: entries with `|i - j| <= bw` are stored.
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i.abs_diff(j) <= self.bw, "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// In-place Doolittle factorization; fails on a vanishing pivot.
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::Numerical(format!("zero pivot at row {k}")));
            }
            let iend = (k + bw + 1).min(n);
            let jend = (k + bw + 1).min(n);
            for i in k + 1..iend {
                let lik_idx = self.idx(i, k);
                let lik = self.data[lik_idx] / pivot;
                if lik == 0.0 {
                    continue;
                }
                self.data[lik_idx] = lik;
                for j in k + 1..jend {
                    let ukj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= lik * ukj;
                }
            }
        }
        Ok(BandedLu { m: self })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                (lo..hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let (n, bw) = (m.n, m.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= m.data[m.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for j in i + 1..hi {
                s -= m.data[m.idx(i, j)] * x[j];
            }
            x[i] = s / m.data[m.idx(i, i)];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_poisson() {
        let n = 50;
        let mut a = BandedMatrix::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&xs);
        let x = a.clone().factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&xs) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let a = BandedMatrix::zeros(3, 1);
        assert!(a.factor().is_err());
    }
}
