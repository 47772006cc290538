//! Semilinear forward problem: damped Picard iteration on `m -> S(m) = <u(m)>`.

use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::angular::AngularQuadrature;
use crate::error::{Error, Result};
use crate::field::{AngularField, ScalarField};
use crate::mpa::MpaModel;
use crate::scattering::ScatteringModel;
use crate::source::BoundarySource;
use crate::transport::{solve_linear_rte_from, TransportConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialGuess {
    /// `m_0 = 0`.
    Zero,
    /// `m_0 = sup f`.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    pub tol_fp: f64,
    pub max_iter: usize,
    pub theta: f64,
    pub init: InitialGuess,
    pub transport: TransportConfig,
}

impl FixedPointConfig {
    pub fn new(transport: TransportConfig) -> Self {
        Self {
            tol_fp: 1e-8,
            max_iter: 200,
            theta: 1.0,
            init: InitialGuess::Zero,
            transport,
        }
    }

    pub fn with_init(mut self, init: InitialGuess) -> Self {
        self.init = init;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_fp = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_fp > 0.0) {
            return Err(Error::Domain(format!("tol_fp must be positive, got {}", self.tol_fp)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Domain(format!("relaxation must lie in (0, 1], got {}", self.theta)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be positive".into()));
        }
        self.transport.validate()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u: AngularField,
    /// `m* = <u>`.
    pub mean: ScalarField,
    /// `Sigma_a(m*)`.
    pub sigma_a: ScalarField,
    /// `|S(m_n) - m_n|_inf` per outer step.
    pub residuals: Vec<f64>,
    /// Discrete `L^2` version of the same residual.
    pub residuals_l2: Vec<f64>,
    /// Number of updates `m_n -> m_{n+1}` performed.
    pub iterations: usize,
    /// Final relaxation parameter.
    pub theta: f64,
}

/// Lower bound `inf f * exp(-diam * g(sup f))` on the solution claimed for the
/// semilinear problem.
pub fn lemma_lower_bound(model: &MpaModel, f: &BoundarySource) -> f64 {
    let diam = model.grid().domain().diameter();
    f.lower() * (-diam * model.envelope(f.upper())).exp()
}

pub fn fixed_point_solve(
    model: &MpaModel,
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    f: &BoundarySource,
    quad: &Arc<AngularQuadrature>,
    cfg: &FixedPointConfig,
) -> Result<ForwardSolution> {
    cfg.validate()?;
    f.check_bounded_below()?;
    model.coefficient(0).check_same_grid(sigma_s)?;
    let grid = model.grid();
    let fbar = f.upper();
    let mut m = match cfg.init {
        InitialGuess::Zero => ScalarField::constant(grid.clone(), 0.0),
        InitialGuess::Upper => ScalarField::constant(grid.clone(), fbar),
    };
    let mut theta = cfg.theta;
    let mut residuals: Vec<f64> = Vec::new();
    let mut residuals_l2 = Vec::new();
    let mut increases = 0;
    let mut u_prev: Option<AngularField> = None;

    for n in 0..=cfg.max_iter {
        let sigma_a = model.eval_sigma_a(&m)?;
        // inner accuracy follows the outer residual, never looser than 1e-4 relative
        let mut tcfg = cfg.transport.clone();
        if let Some(&r) = residuals.last() {
            tcfg.tol_si = (1e-3 * r / fbar).min(1e-4).max(cfg.transport.tol_si);
        }
        let lin = solve_linear_rte_from(&sigma_a, sigma_s, k, f, quad, &tcfg, u_prev.as_ref())?;
        let s = lin.u.angular_average();
        let diff = s.zip_map(&m, |a, b| a - b)?;
        let res = diff.sup_norm();
        residuals.push(res);
        residuals_l2.push(diff.lp_norm(2.0));
        debug!("fixed point step {n}: residual {res:.3e} (inner {} its)", lin.iterations);

        if res <= cfg.tol_fp {
            let sigma_a = model.eval_sigma_a(&s)?;
            return Ok(ForwardSolution {
                u: lin.u,
                mean: s,
                sigma_a,
                residuals,
                residuals_l2,
                iterations: n,
                theta,
            });
        }
        if n >= 1 && res > residuals[n - 1] {
            increases += 1;
            if increases == 3 {
                theta *= 0.5;
                increases = 0;
                warn!("fixed-point residual rose three times in a row; relaxation halved to {theta}");
            }
        } else {
            increases = 0;
        }
        m = m.zip_map(&s, |a, b| ((1.0 - theta) * a + theta * b).clamp(0.0, fbar))?;
        u_prev = Some(lin.u);
    }
    Err(Error::Iteration {
        stage: "fixed point",
        iterations: cfg.max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
        trace: residuals,
    })
}

/// `H = Sigma_a(m*)^q m*`.
pub fn internal_data(model: &MpaModel, sol: &ForwardSolution) -> Result<ScalarField> {
    internal_data_from(model, &sol.mean)
}

/// `H = Sigma_a(m)^q m` for a given mean field.
pub fn internal_data_from(model: &MpaModel, mean: &ScalarField) -> Result<ScalarField> {
    let q = model.q();
    if q < 1.0 {
        return Err(Error::Unsupported(format!(
            "data exponent q = {q} < 1: only q >= 1 is supported"
        )));
    }
    let sigma = model.eval_sigma_a(mean)?;
    sigma.zip_map(mean, |s, m| s.powf(q) * m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::grid::SpatialGrid;
    use approx::assert_abs_diff_eq;

    fn setup(h: f64, nv: usize) -> (Arc<crate::grid::SpatialGrid>, Arc<AngularQuadrature>) {
        (
            Arc::new(SpatialGrid::new(Domain::UnitDisk, h).unwrap()),
            Arc::new(AngularQuadrature::uniform(nv).unwrap()),
        )
    }

    #[test]
    fn linear_model_needs_one_update() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let model = MpaModel::constant(&g, &[0.6]).unwrap();
        let s = ScalarField::constant(g.clone(), 1.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g));
        let sol = fixed_point_solve(&model, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn nonlinear_example_converges_inside_bounds() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let model = MpaModel::constant(&g, &[0.5, 0.5]).unwrap();
        let s = ScalarField::constant(g.clone(), 2.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g));
        let sol = fixed_point_solve(&model, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        assert!(sol.iterations <= 60);
        assert!(sol.residuals.windows(2).all(|w| w[1] < w[0]), "{:?}", sol.residuals);
        let c = (-2.0f64).exp();
        assert_abs_diff_eq!(lemma_lower_bound(&model, &f), c, epsilon = 1e-15);
        assert!(sol.mean.min() > c && sol.mean.max() < 1.0);

        let upper = fixed_point_solve(
            &model,
            &s,
            &ScatteringModel::Isotropic,
            &f,
            &q,
            &cfg.clone().with_init(InitialGuess::Upper),
        )
        .unwrap();
        let d = upper.mean.zip_map(&sol.mean, |a, b| a - b).unwrap().sup_norm();
        assert!(d <= 10.0 * cfg.tol_fp, "{d}");
    }

    #[test]
    fn internal_data_examples() {
        let (g, _) = setup(0.25, 8);
        let one = ScalarField::constant(g.clone(), 1.0);
        let model = MpaModel::constant(&g, &[3.0]).unwrap();
        assert!(internal_data_from(&model, &one).unwrap().values().iter().all(|&v| v == 3.0));
        let model2 = model.clone().with_q(2.0).unwrap();
        assert!(internal_data_from(&model2, &one).unwrap().values().iter().all(|&v| v == 9.0));
        let half = model.with_q(0.5).unwrap();
        assert!(matches!(internal_data_from(&half, &one), Err(Error::Unsupported(_))));
    }

    #[test]
    fn zero_lower_bound_source_is_rejected() {
        let (g, q) = setup(0.25, 8);
        let model = MpaModel::constant(&g, &[1.0]).unwrap();
        let s = ScalarField::constant(g.clone(), 1.0);
        let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g));
        assert!(fixed_point_solve(&model, &s, &ScatteringModel::Isotropic, &BoundarySource::zero(), &q, &cfg).is_err());
    }
}
