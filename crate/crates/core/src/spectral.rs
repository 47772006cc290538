//! Scaled coefficients of the diffusive regime and the principal Dirichlet eigenpair of
//! `-div(D grad .)`.

use std::sync::Arc;

use log::debug;

use crate::error::{Error, Result};
use crate::fd::FdOperator;
use crate::field::ScalarField;
use crate::grid::SpatialGrid;

/// `Sigma_{a,eps} = eps Sigma_a`, `Sigma_{s,eps} = Sigma_s / eps`.
#[derive(Debug, Clone)]
pub struct ScaledCoefficients {
    eps: f64,
    sigma_a: ScalarField,
    sigma_s: ScalarField,
}

impl ScaledCoefficients {
    pub fn new(eps: f64, sigma_a: ScalarField, sigma_s: ScalarField) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
        }
        sigma_a.check_same_grid(&sigma_s)?;
        if sigma_s.min() <= 0.0 {
            return Err(Error::Model(format!(
                "scattering must be strictly positive, min = {}",
                sigma_s.min()
            )));
        }
        if sigma_a.min() < 0.0 {
            return Err(Error::Model(format!("absorption must be nonnegative, min = {}", sigma_a.min())));
        }
        Ok(Self { eps, sigma_a, sigma_s })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.sigma_a.grid()
    }

    pub fn sigma_a(&self) -> &ScalarField {
        &self.sigma_a
    }

    pub fn sigma_s(&self) -> &ScalarField {
        &self.sigma_s
    }

    pub fn sigma_a_eps(&self) -> ScalarField {
        self.sigma_a.map(|a| self.eps * a)
    }

    pub fn sigma_s_eps(&self) -> ScalarField {
        self.sigma_s.map(|s| s / self.eps)
    }

    pub fn sigma_t_eps(&self) -> ScalarField {
        let e = self.eps;
        self.sigma_a
            .zip_map(&self.sigma_s, |a, s| e * a + s / e)
            .expect("grids checked at construction")
    }

    /// Same base fields at another `eps`.
    pub fn at(&self, eps: f64) -> Result<Self> {
        Self::new(eps, self.sigma_a.clone(), self.sigma_s.clone())
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit discrete `L^2` norm, positive sum.
    pub vector: ScalarField,
    /// `|A v - lambda v| / (lambda |v|)`.
    pub residual: f64,
}

const EIGEN_TOL: f64 = 1e-8;

/// Smallest eigenpair of `-div(coef grad .)` with homogeneous Dirichlet data, by inverse
/// iteration.
pub fn principal_eigenpair(coef: &ScalarField) -> Result<EigenPair> {
    let op = FdOperator::new(coef)?;
    let lu = op.banded(None).factor()?;
    let n = op.len();
    let h2 = coef.grid().cell_area();
    let mut x = vec![1.0 / (n as f64 * h2).sqrt(); n];
    let mut last = f64::NAN;
    for it in 0..1000 {
        let y = lu.solve(&x);
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let lambda = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / yy;
        // A y = x
        let res = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / (lambda * yy.sqrt());
        let norm = (yy * h2).sqrt();
        let sign = if y.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        x = y.iter().map(|v| sign * v / norm).collect();
        if res <= EIGEN_TOL {
            debug!("inverse iteration converged in {} steps, lambda = {lambda}", it + 1);
            return Ok(EigenPair {
                value: lambda,
                vector: ScalarField::new(coef.grid().clone(), x)?,
                residual: res,
            });
        }
        last = res;
    }
    Err(Error::Iteration {
        stage: "inverse iteration",
        iterations: 1000,
        residual: last,
        trace: vec![],
    })
}

/// `(lambda_eps, Phi_eps)` for `A_eps = -div(Sigma_{t,eps}^{-1} grad .)`.
pub fn dirichlet_eigenpair(c: &ScaledCoefficients) -> Result<EigenPair> {
    principal_eigenpair(&c.sigma_t_eps().map(|s| 1.0 / s))
}

/// `(lambda*, Phi^dagger)` for the limit operator `-div(Sigma_s^{-1} grad .)`.
pub fn limit_eigenpair(c: &ScaledCoefficients) -> Result<EigenPair> {
    principal_eigenpair(&c.sigma_s().map(|s| 1.0 / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn square_eigenvalue_is_separable() {
        // pi x pi square, D = 1: lambda = 2, cell-centred grid aligned with the edges
        let pi = std::f64::consts::PI;
        let g = Arc::new(SpatialGrid::new(Domain::rectangle(pi, pi).unwrap(), pi / 40.0).unwrap());
        let e = principal_eigenpair(&ScalarField::constant(g.clone(), 1.0)).unwrap();
        assert!((e.value - 2.0).abs() < 0.01 * 2.0, "{}", e.value);
        assert!(e.residual <= EIGEN_TOL);
        assert!(e.vector.min() > 0.0);
        let l2 = e.vector.lp_norm(2.0);
        assert!((l2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_fields_follow_eps() {
        let g = Arc::new(SpatialGrid::new(Domain::UnitDisk, 0.25).unwrap());
        let c = ScaledCoefficients::new(
            0.1,
            ScalarField::constant(g.clone(), 2.0),
            ScalarField::constant(g.clone(), 3.0),
        )
        .unwrap();
        assert!((c.sigma_t_eps().max() - (0.2 + 30.0)).abs() < 1e-12);
        assert!(ScaledCoefficients::new(0.1, c.sigma_a().clone(), ScalarField::constant(g, 0.0)).is_err());
        assert!(c.at(-1.0).is_err());
    }
}
