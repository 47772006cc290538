use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{direction, Point};

/// Uniform directions on the unit circle with equal weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    thetas: Vec<f64>,
    dirs: Vec<Point>,
    weight: f64,
}

impl AngularQuadrature {
    /// `n` directions at angles `2 pi (j + 1/2) / n`. `n` must be even so that the
    /// set is closed under `v -> -v`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Domain(format!(
                "number of directions must be even and >= 2, got {n}"
            )));
        }
        let thetas: Vec<f64> = (0..n).map(|j| 2.0 * PI * (j as f64 + 0.5) / n as f64).collect();
        let dirs = thetas.iter().map(|&t| direction(t)).collect();
        Ok(Self {
            thetas,
            dirs,
            weight: 1.0 / n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::repeat_n(self.weight, self.len())
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.thetas[j]
    }

    pub fn dir(&self, j: usize) -> Point {
        self.dirs[j]
    }

    pub fn dirs(&self) -> &[Point] {
        &self.dirs
    }

    /// Index of the direction opposite to `j`.
    pub fn opposite(&self, j: usize) -> usize {
        (j + self.len() / 2) % self.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_one() {
        for n in [2, 8, 32] {
            let q = AngularQuadrature::uniform(n).unwrap();
            assert_abs_diff_eq!(q.weights().sum::<f64>(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn odd_counts_are_rejected() {
        assert!(AngularQuadrature::uniform(7).is_err());
        assert!(AngularQuadrature::uniform(0).is_err());
    }

    #[test]
    fn closed_under_reflection() {
        let q = AngularQuadrature::uniform(16).unwrap();
        for j in 0..16 {
            let (a, b) = (q.dir(j), q.dir(q.opposite(j)));
            assert_abs_diff_eq!(a[0], -b[0], epsilon = 1e-14);
            assert_abs_diff_eq!(a[1], -b[1], epsilon = 1e-14);
        }
    }

    #[test]
    fn trigonometric_exactness() {
        let n = 12;
        let q = AngularQuadrature::uniform(n).unwrap();
        for k in 1..n as i32 {
            let re: f64 = (0..n).map(|j| q.weight() * (k as f64 * q.theta(j)).cos()).sum();
            let im: f64 = (0..n).map(|j| q.weight() * (k as f64 * q.theta(j)).sin()).sum();
            assert_abs_diff_eq!(re, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(im, 0.0, epsilon = 1e-14);
        }
    }
}
