//! Semilinear diffusion limit `-div(D grad U) + Sigma_a(U) U = 0` with Dirichlet data.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::fd::FdOperator;
use crate::field::ScalarField;
use crate::geometry::Point;
use crate::mpa::MpaModel;
use crate::source::BoundarySource;

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    pub coef: ScalarField,
    pub model: MpaModel,
    pub f0: BoundarySource,
}

impl DiffusionProblem {
    /// Default coefficient `D = 1 / (2 Sigma_s)`.
    pub fn new(model: MpaModel, sigma_s: &ScalarField, f0: BoundarySource) -> Result<Self> {
        if sigma_s.min() <= 0.0 {
            return Err(Error::Model(format!(
                "scattering must be strictly positive for the diffusion limit, min = {}",
                sigma_s.min()
            )));
        }
        let coef = sigma_s.map(|s| 0.5 / s);
        Self::with_coefficient(model, coef, f0)
    }

    pub fn with_coefficient(model: MpaModel, coef: ScalarField, f0: BoundarySource) -> Result<Self> {
        model.coefficient(0).check_same_grid(&coef)?;
        if coef.min() <= 0.0 {
            return Err(Error::Model(format!("D must be positive, min = {}", coef.min())));
        }
        f0.check_bounded_below()?;
        Ok(Self { coef, model, f0 })
    }

    /// `f0` at a boundary point, looking inward.
    fn trace(&self, p: Point) -> f64 {
        let n = self.coef.grid().domain().outward_normal(p);
        self.f0.eval(p, [-n[0], -n[1]])
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionSolution {
    pub u: ScalarField,
    /// Solution of the linear comparison problem with `Sigma_a(sup f0)`.
    pub comparison: ScalarField,
    /// Row-scaled residual sup-norm after every accepted step.
    pub residuals: Vec<f64>,
    pub newton_steps: usize,
    pub picard_steps: usize,
}

const MAX_NEWTON: usize = 50;
const MAX_PICARD: usize = 500;
const BOUND_TOL: f64 = 1e-8;

struct Discrete<'a> {
    p: &'a DiffusionProblem,
    op: FdOperator,
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl Discrete<'_> {
    fn sigma(&self, u: &[f64]) -> Result<Vec<f64>> {
        let f = ScalarField::new(self.op.grid().clone(), u.to_vec())?;
        Ok(self.p.model.eval_sigma_a(&f)?.into_values())
    }

    fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        let au = self.op.matvec(u);
        let s = self.sigma(u)?;
        Ok((0..u.len()).map(|i| au[i] + s[i] * u[i] - self.rhs[i]).collect())
    }

    /// Residual measured in units of `U`: each row divided by its diagonal.
    fn scaled(&self, f: &[f64], u: &[f64]) -> Result<f64> {
        let s = self.sigma(u)?;
        Ok((0..f.len()).fold(0.0f64, |m, i| m.max((f[i] / (self.diag[i] + s[i])).abs())))
    }

    /// Solve `(A + diag(c)) x = rhs`.
    fn linear(&self, c: &[f64]) -> Result<Vec<f64>> {
        Ok(self.op.banded(Some(c)).factor()?.solve(&self.rhs))
    }
}

/// `d/dm Sigma_a(m)` for a law without smoothing kernels.
fn sigma_derivative(model: &MpaModel, u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let m = u[i].abs();
            (1..=model.degree())
                .rev()
                .fold(0.0, |acc, k| acc * m + k as f64 * model.coefficient(k).values()[i])
        })
        .collect()
}

/// Newton with backtracking on the row-scaled residual (each equation divided by its
/// diagonal, so `tol` is measured in units of `U`), iterates clamped to the comparison
/// bounds; damped Picard takes over when Newton stalls or the law has smoothing kernels.
pub fn solve_semilinear_diffusion(p: &DiffusionProblem, tol: f64) -> Result<DiffusionSolution> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let op = FdOperator::new(&p.coef)?;
    let rhs = op.boundary_rhs(|x| p.trace(x));
    let diag = op.diagonal();
    let d = Discrete { p, op, diag, rhs };
    let n = d.op.len();
    let upper = p.f0.upper();

    let grid = d.op.grid().clone();
    let s_sup = p.model.eval_sigma_a(&ScalarField::constant(grid.clone(), upper))?;
    let v = d.linear(s_sup.values())?;

    let mut u: Vec<f64> = v.clone();
    let mut f = d.residual(&u)?;
    let mut res = d.scaled(&f, &u)?;
    let mut residuals = vec![res];
    let mut newton_steps = 0;
    let mut picard_steps = 0;

    if !p.model.has_kernels() {
        while res > tol && newton_steps < MAX_NEWTON {
            let s = d.sigma(&u)?;
            let ds = sigma_derivative(&p.model, &u);
            let diag: Vec<f64> = (0..n).map(|i| s[i] + ds[i] * u[i]).collect();
            let step = d.op.banded(Some(&diag)).factor()?.solve(&f);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..20 {
                let trial: Vec<f64> = (0..n)
                    .map(|i| (u[i] - alpha * step[i]).clamp(v[i], upper))
                    .collect();
                let ft = d.residual(&trial)?;
                let rt = d.scaled(&ft, &trial)?;
                if rt < (1.0 - 1e-4 * alpha) * res || rt <= tol {
                    accepted = Some((trial, ft, rt));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((t, ft, rt)) => {
                    u = t;
                    f = ft;
                    res = rt;
                    residuals.push(res);
                    newton_steps += 1;
                    debug!("newton step {newton_steps}: residual {res:.3e} (alpha {alpha})");
                }
                None => {
                    warn!("newton line search stalled at residual {res:.3e}; switching to picard");
                    break;
                }
            }
        }
    }

    while res > tol && picard_steps < MAX_PICARD {
        let s = d.sigma(&u)?;
        u = d.linear(&s)?;
        f = d.residual(&u)?;
        let next = d.scaled(&f, &u)?;
        residuals.push(next);
        picard_steps += 1;
        if next >= res && next < 100.0 * tol {
            // stagnation at round-off level
            res = next;
            break;
        }
        res = next;
    }
    if res > tol {
        return Err(Error::Iteration {
            stage: "semilinear diffusion",
            iterations: newton_steps + picard_steps,
            residual: res,
            trace: residuals,
        });
    }

    for i in 0..n {
        if !(u[i] > 0.0) || u[i] > upper + BOUND_TOL || u[i] < v[i] - BOUND_TOL {
            let c = grid.center(i);
            return Err(Error::NumericalIntegrity {
                stage: "semilinear diffusion",
                detail: format!(
                    "U = {} at ({:.4}, {:.4}) outside [{}, {}]",
                    u[i], c[0], c[1], v[i], upper
                ),
            });
        }
    }
    Ok(DiffusionSolution {
        u: ScalarField::new(grid.clone(), u)?,
        comparison: ScalarField::new(grid, v)?,
        residuals,
        newton_steps,
        picard_steps,
    })
}

/// `H = Sigma_a(U) U`.
pub fn diffusion_data(u: &ScalarField, model: &MpaModel) -> Result<ScalarField> {
    if u.min() < 0.0 {
        return Err(Error::Data(format!("diffusion density must be nonnegative, min = {}", u.min())));
    }
    model.eval_sigma_a(u)?.zip_map(u, |s, v| s * v)
}

/// `a / b` with `0 / 0 = 0` and `x / 0 = inf`.
pub fn safe_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// `|Sigma_a U - Sigma~_a U~|_p / |H - H~|_p`.
pub fn lp_stability_ratio(
    h: &ScalarField,
    h_tilde: &ScalarField,
    sigma: &ScalarField,
    sigma_tilde: &ScalarField,
    p: f64,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must lie in [1, inf), got {p}")));
    }
    h.check_same_grid(sigma)?;
    let num = sigma.zip_map(sigma_tilde, |a, b| a - b)?.lp_norm(p);
    let den = h.zip_map(h_tilde, |a, b| a - b)?.lp_norm(p);
    Ok(safe_ratio(num, den))
}
