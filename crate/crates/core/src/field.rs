//! Scalar and angular fields sampled on the active cells of a grid.

use std::sync::Arc;

use crate::angular::AngularQuadrature;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::SpatialGrid;

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<SpatialGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SpatialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "field has {} values but the grid has {} active cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at cell {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<SpatialGrid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<SpatialGrid>, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.centers().iter().map(|&c| f(c)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.check_same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cell-centred quadrature of the field over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Discrete `L^p` norm with the cell-area quadrature, `p` in `[1, inf)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let h2 = self.grid.cell_area();
        if p == 1.0 {
            return self.values.iter().map(|v| v.abs()).sum::<f64>() * h2;
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * h2).powf(1.0 / p)
    }

    pub fn boxed(&self) -> Vec<f64> {
        self.grid.to_box(&self.values)
    }

    /// Bilinear interpolation at an arbitrary point (nearest-value extrapolation
    /// outside the active cells).
    pub fn interpolate(&self, p: Point) -> f64 {
        self.grid.interpolate(&self.boxed(), p)
    }
}

/// Function of (cell, direction), stored cell-major.
#[derive(Debug, Clone)]
pub struct AngularField {
    grid: Arc<SpatialGrid>,
    quad: Arc<AngularQuadrature>,
    values: Vec<f64>,
}

impl AngularField {
    pub fn new(grid: Arc<SpatialGrid>, quad: Arc<AngularQuadrature>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * quad.len() {
            return Err(Error::Data(format!(
                "angular field has {} values, expected {}",
                values.len(),
                grid.len() * quad.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite angular value".into()));
        }
        Ok(Self { grid, quad, values })
    }

    pub fn constant(grid: Arc<SpatialGrid>, quad: Arc<AngularQuadrature>, c: f64) -> Self {
        let values = vec![c; grid.len() * quad.len()];
        Self { grid, quad, values }
    }

    pub fn from_fn(
        grid: Arc<SpatialGrid>,
        quad: Arc<AngularQuadrature>,
        f: impl Fn(Point, Point) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(grid.len() * quad.len());
        for &c in grid.centers() {
            for &v in quad.dirs() {
                values.push(f(c, v));
            }
        }
        Self { grid, quad, values }
    }

    /// Constant-in-angle extension of a scalar field.
    pub fn broadcast(scalar: &ScalarField, quad: Arc<AngularQuadrature>) -> Self {
        let nv = quad.len();
        let mut values = Vec::with_capacity(scalar.len() * nv);
        for &s in scalar.values() {
            values.extend(std::iter::repeat_n(s, nv));
        }
        Self {
            grid: scalar.grid().clone(),
            quad,
            values,
        }
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn quadrature(&self) -> &Arc<AngularQuadrature> {
        &self.quad
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn n_dirs(&self) -> usize {
        self.quad.len()
    }

    #[inline]
    pub fn get(&self, cell: usize, dir: usize) -> f64 {
        self.values[cell * self.quad.len() + dir]
    }

    /// Values at one cell over all directions.
    pub fn at_cell(&self, cell: usize) -> &[f64] {
        let nv = self.quad.len();
        &self.values[cell * nv..(cell + 1) * nv]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Weighted direction sum `<u>(x) = sum_j w_j u(x, v_j)`.
    pub fn angular_average(&self) -> ScalarField {
        let w = self.quad.weight();
        let values = self
            .values
            .chunks_exact(self.quad.len())
            .map(|c| c.iter().sum::<f64>() * w)
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Largest pointwise difference.
    pub fn sup_distance(&self, other: &AngularField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Free-function form of [`AngularField::angular_average`].
pub fn angular_average(u: &AngularField) -> ScalarField {
    u.angular_average()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(nv: usize) -> (Arc<SpatialGrid>, Arc<AngularQuadrature>) {
        (
            Arc::new(SpatialGrid::new(Domain::UnitDisk, 0.25).unwrap()),
            Arc::new(AngularQuadrature::uniform(nv).unwrap()),
        )
    }

    #[test]
    fn average_of_constant_is_constant() {
        let (g, q) = setup(8);
        let u = AngularField::constant(g, q, 2.5);
        for &m in u.angular_average().values() {
            assert_abs_diff_eq!(m, 2.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn average_of_cosine_vanishes() {
        let (g, q) = setup(16);
        let u = AngularField::from_fn(g, q, |_, v| v[0]);
        for &m in u.angular_average().values() {
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn average_matches_explicit_weighted_sum() {
        let (g, q) = setup(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vals: Vec<f64> = (0..g.len() * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = AngularField::new(g.clone(), q.clone(), vals.clone()).unwrap();
        let avg = u.angular_average();
        for i in 0..g.len() {
            let mut s = 0.0;
            for j in 0..8 {
                s += vals[i * 8 + j] / 8.0;
            }
            assert_abs_diff_eq!(avg.values()[i], s, epsilon = 1e-15);
        }
    }

    #[test]
    fn average_is_idempotent_after_broadcast() {
        let (g, q) = setup(8);
        let u = AngularField::from_fn(g, q.clone(), |p, v| 1.0 + p[0] * v[1] + v[0] * v[0]);
        let once = u.angular_average();
        let twice = AngularField::broadcast(&once, q).angular_average();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_length_mismatch_and_nan() {
        let (g, q) = setup(4);
        assert!(ScalarField::new(g.clone(), vec![0.0; 3]).is_err());
        let mut v = vec![0.0; g.len()];
        v[0] = f64::NAN;
        assert!(ScalarField::new(g.clone(), v).is_err());
        assert!(AngularField::new(g, q, vec![1.0; 5]).is_err());
    }
}
