//! Parameter scans over the Knudsen number: spectral gap, eigenvalue scaling, diffusion
//! approximation error and weighted stability ratios.

use std::fmt::Write as _;
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::AngularQuadrature;
use crate::diffusion::{solve_semilinear_diffusion, DiffusionProblem, DiffusionSolution};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::forward::{fixed_point_solve, FixedPointConfig};
use crate::grid::SpatialGrid;
use crate::inversion::{l1_stability_report, StabilityRecord};
use crate::io::fmt_f64;
use crate::mpa::MpaModel;
use crate::peierls::{assemble_peierls, mu_constant_scaled, spectral_radius};
use crate::scattering::ScatteringModel;
use crate::source::BoundarySource;
use crate::spectral::{dirichlet_eigenpair, limit_eigenpair, ScaledCoefficients};
use crate::transport::TransportConfig;

pub const SCAN_HEADER: &str = "epsilon,one_minus_rho,lambda_eps_over_eps,mu,slope_cum";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanOptions {
    /// Ray step for attenuation; `None` means `h / 2`.
    #[serde(default)]
    pub h_ray: Option<f64>,
    /// Boundary-layer radius factor in `r = kappa |log eps| / inf Sigma_{t,eps}`.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Directions searched for `mu`.
    #[serde(default = "default_mu_dirs")]
    pub mu_dirs: usize,
    #[serde(default)]
    pub diagnostics: bool,
}

fn default_kappa() -> f64 {
    4.0
}

fn default_mu_dirs() -> usize {
    64
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            h_ray: None,
            kappa: default_kappa(),
            mu_dirs: default_mu_dirs(),
            diagnostics: false,
        }
    }
}

/// Checks of the interior eigen-relation and boundary-layer behaviour of `Phi_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenDiagnostics {
    pub split_radius: f64,
    pub interior_cells: usize,
    /// `max |P Phi - Phi + lambda Phi / (2 Sigma_t)|` over interior cells.
    pub inn_residual: f64,
    /// `max |P Phi|` over the boundary layer.
    pub boundary_max: f64,
    /// `boundary_max / (eps |log eps|)`.
    pub boundary_scaled: f64,
    /// Pearson correlation of `Phi` with the distance to the boundary in the layer.
    pub correlation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub eps: f64,
    pub one_minus_rho: f64,
    pub lambda_eps_over_eps: f64,
    pub mu: f64,
    /// Least-squares log-log slope of `1 - rho` over this and all previous rows.
    pub slope_cum: f64,
    pub power_iterations: usize,
    pub diagnostics: Option<EigenDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// Fitted exponent over all rows (NaN with fewer than two rows).
    pub slope: f64,
    /// FD eigenvalue of the limit operator.
    pub lambda_star: f64,
}

impl ScanTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SCAN_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_f64(r.eps),
                fmt_f64(r.one_minus_rho),
                fmt_f64(r.lambda_eps_over_eps),
                fmt_f64(r.mu),
                fmt_f64(r.slope_cum)
            );
        }
        s
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn check_eps_list(eps: &[f64]) -> Result<()> {
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("epsilon values must be positive, got {e}")));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("epsilon list must be strictly decreasing".into()));
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Assemble and analyze `P_eps` for every `eps` (strictly decreasing).
pub fn epsilon_scan(
    sigma_a: &ScalarField,
    sigma_s: &ScalarField,
    eps: &[f64],
    opts: &ScanOptions,
) -> Result<ScanTable> {
    check_eps_list(eps)?;
    let base = ScaledCoefficients::new(1.0, sigma_a.clone(), sigma_s.clone())?;
    let lambda_star = if eps.is_empty() {
        f64::NAN
    } else {
        limit_eigenpair(&base)?.value
    };
    let grid = sigma_a.grid().clone();
    let h_ray = opts.h_ray.unwrap_or(0.5 * grid.h());
    let quad = AngularQuadrature::uniform(opts.mu_dirs)?;
    let dist: Vec<f64> = (0..grid.len()).map(|i| grid.distance_to_boundary(i)).collect();
    let mut rows = Vec::with_capacity(eps.len());
    let mut pts = Vec::new();
    for &e in eps {
        let c = base.at(e)?;
        let p = assemble_peierls(&c, h_ray)?;
        let sr = spectral_radius(&p)?;
        if !(sr.rho < 1.0) {
            return Err(Error::NumericalIntegrity {
                stage: "epsilon scan",
                detail: format!("spectral radius {} is not below one at eps = {e}", sr.rho),
            });
        }
        let pair = dirichlet_eigenpair(&c)?;
        let mu = mu_constant_scaled(&c, &quad, h_ray);
        let diagnostics = if opts.diagnostics {
            let st = c.sigma_t_eps();
            let phi = pair.vector.values();
            let pphi = p.apply(phi);
            let r = opts.kappa * e.ln().abs() / st.min();
            let (mut inn, mut bmax, mut n_in) = (0.0f64, 0.0f64, 0);
            let (mut lx, mut ly) = (Vec::new(), Vec::new());
            for i in 0..grid.len() {
                if dist[i] >= r {
                    n_in += 1;
                    let lhs = pphi[i] - phi[i] + pair.value * phi[i] / (2.0 * st.values()[i]);
                    inn = inn.max(lhs.abs());
                } else {
                    bmax = bmax.max(pphi[i].abs());
                    lx.push(phi[i]);
                    ly.push(dist[i]);
                }
            }
            Some(EigenDiagnostics {
                split_radius: r,
                interior_cells: n_in,
                inn_residual: if n_in > 0 { inn } else { f64::NAN },
                boundary_max: bmax,
                boundary_scaled: bmax / (e * e.ln().abs()),
                correlation: pearson(&lx, &ly),
            })
        } else {
            None
        };
        pts.push((e, 1.0 - sr.rho));
        let row = ScanRow {
            eps: e,
            one_minus_rho: 1.0 - sr.rho,
            lambda_eps_over_eps: pair.value / e,
            mu,
            slope_cum: loglog_slope(&pts),
            power_iterations: sr.iterations,
            diagnostics,
        };
        info!(
            "eps {e}: 1 - rho = {:.6e}, lambda/eps = {:.6}, mu = {:.6}",
            row.one_minus_rho, row.lambda_eps_over_eps, row.mu
        );
        rows.push(row);
    }
    Ok(ScanTable {
        slope: loglog_slope(&pts),
        rows,
        lambda_star,
    })
}

/// Iid uniform `[-1, 1]` cell values from a seeded stream.
pub fn rough_field(grid: &Arc<SpatialGrid>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..grid.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ScalarField::new(grid.clone(), v).expect("one value per cell")
}

/// Same scan with `Sigma_a + eps^beta xi` (clamped at zero) at each `eps`.
pub fn perturbed_epsilon_scan(
    sigma_a: &ScalarField,
    sigma_s: &ScalarField,
    eps: &[f64],
    beta: f64,
    seed: u64,
    opts: &ScanOptions,
) -> Result<ScanTable> {
    check_eps_list(eps)?;
    let xi = rough_field(sigma_a.grid(), seed);
    let mut rows = Vec::new();
    let mut pts = Vec::new();
    let mut lambda_star = f64::NAN;
    for &e in eps {
        let amp = e.powf(beta);
        let pert = sigma_a.zip_map(&xi, |a, x| (a + amp * x).max(0.0))?;
        let t = epsilon_scan(&pert, sigma_s, &[e], opts)?;
        lambda_star = t.lambda_star;
        let mut row = t.rows[0];
        pts.push((e, row.one_minus_rho));
        row.slope_cum = loglog_slope(&pts);
        rows.push(row);
    }
    Ok(ScanTable {
        slope: loglog_slope(&pts),
        rows,
        lambda_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLimitRow {
    pub eps: f64,
    /// `sup |<u_eps> - U|` over cells farther than the margin from the boundary.
    pub error: f64,
    /// Previous row's error divided by this one (NaN on the first row).
    pub ratio: f64,
    pub picard_iterations: usize,
}

/// Compare scaled semilinear transport with its diffusion limit.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_limit_scan(
    model: &MpaModel,
    sigma_s: &ScalarField,
    f: &BoundarySource,
    eps: &[f64],
    quad: &Arc<AngularQuadrature>,
    margin: f64,
    tol_fp: f64,
) -> Result<(DiffusionSolution, Vec<DiffusionLimitRow>)> {
    check_eps_list(eps)?;
    let grid = model.grid().clone();
    let problem = DiffusionProblem::new(model.clone(), sigma_s, f.clone())?;
    let limit = solve_semilinear_diffusion(&problem, 1e-10)?;
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| grid.distance_to_boundary(i) > margin).collect();
    if interior.is_empty() {
        return Err(Error::Domain(format!("no cells farther than {margin} from the boundary")));
    }
    let mut rows: Vec<DiffusionLimitRow> = Vec::new();
    for &e in eps {
        let scaled = model.scaled(e);
        let se = sigma_s.map(|s| s / e);
        let cfg = FixedPointConfig::new(TransportConfig::for_epsilon(&grid, e)).with_tol(tol_fp);
        let sol = fixed_point_solve(&scaled, &se, &ScatteringModel::Isotropic, f, quad, &cfg)?;
        let error = interior
            .iter()
            .map(|&i| (sol.mean.values()[i] - limit.u.values()[i]).abs())
            .fold(0.0, f64::max);
        let ratio = rows.last().map_or(f64::NAN, |r| r.error / error);
        info!("eps {e}: diffusion-approximation error {error:.4e}");
        rows.push(DiffusionLimitRow {
            eps: e,
            error,
            ratio,
            picard_iterations: sol.iterations,
        });
    }
    Ok((limit, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub eps: f64,
    pub weighted: StabilityRecord,
    pub unweighted: StabilityRecord,
}

/// Weighted and unweighted `L^1` stability ratios between two absorption laws in the
/// scaled regime, the weight being the principal eigenfunction of `A_eps`.
#[allow(clippy::too_many_arguments)]
pub fn stability_scan(
    model: &MpaModel,
    perturbed: &MpaModel,
    sigma_s: &ScalarField,
    f: &BoundarySource,
    eps: &[f64],
    quad: &Arc<AngularQuadrature>,
    tol_fp: f64,
) -> Result<Vec<StabilityRow>> {
    check_eps_list(eps)?;
    let grid = model.grid().clone();
    let mut rows = Vec::new();
    for &e in eps {
        let se = sigma_s.map(|s| s / e);
        let cfg = FixedPointConfig::new(TransportConfig::for_epsilon(&grid, e)).with_tol(tol_fp);
        let a = fixed_point_solve(&model.scaled(e), &se, &ScatteringModel::Isotropic, f, quad, &cfg)?;
        let b = fixed_point_solve(&perturbed.scaled(e), &se, &ScatteringModel::Isotropic, f, quad, &cfg)?;
        let h = a.sigma_a.zip_map(&a.mean, |s, m| s * m)?;
        let ht = b.sigma_a.zip_map(&b.mean, |s, m| s * m)?;
        let c = ScaledCoefficients::new(e, a.sigma_a.map(|s| s / e), sigma_s.clone())?;
        let phi = dirichlet_eigenpair(&c)?.vector.map(|v| v.max(0.0));
        let weighted = l1_stability_report(&a.sigma_a, &b.sigma_a, &h, &ht, &a.sigma_a, Some(&phi), Some(&b.mean))?;
        let unweighted = l1_stability_report(&a.sigma_a, &b.sigma_a, &h, &ht, &a.sigma_a, None, None)?;
        info!(
            "eps {e}: weighted ratio {:.4e}, unweighted ratio {:.4e}",
            weighted.ratio, unweighted.ratio
        );
        rows.push(StabilityRow { eps: e, weighted, unweighted });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn empty_scan_is_empty() {
        let g = Arc::new(SpatialGrid::new(Domain::UnitDisk, 0.25).unwrap());
        let one = ScalarField::constant(g, 1.0);
        let t = epsilon_scan(&one, &one, &[], &ScanOptions::default()).unwrap();
        assert!(t.rows.is_empty() && t.slope.is_nan());
        assert_eq!(t.to_csv(), format!("{SCAN_HEADER}\n"));
    }

    #[test]
    fn eps_list_is_validated() {
        assert!(check_eps_list(&[0.2, 0.1]).is_ok());
        assert!(check_eps_list(&[0.1, 0.2]).is_err());
        assert!(check_eps_list(&[0.2, -0.1]).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&e: &f64| (e, 3.0 * e * e)).collect();
        assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_nan());
    }

    #[test]
    fn coarse_scan_rows_are_consistent() {
        let g = Arc::new(SpatialGrid::new(Domain::UnitDisk, 1.0 / 8.0).unwrap());
        let one = ScalarField::constant(g, 1.0);
        let opts = ScanOptions {
            diagnostics: true,
            ..ScanOptions::default()
        };
        let t = epsilon_scan(&one, &one, &[0.5, 0.25], &opts).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[0].slope_cum.is_nan());
        assert_eq!(t.rows[1].slope_cum, t.slope);
        for r in &t.rows {
            assert!(r.one_minus_rho > 0.0 && r.one_minus_rho < 1.0);
            assert!(r.mu > 0.0 && r.mu < 1.0);
            assert!(r.diagnostics.unwrap().correlation > 0.0);
        }
        assert!(t.rows[1].one_minus_rho < t.rows[0].one_minus_rho);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn rough_field_is_bounded_and_seeded() {
        let g = Arc::new(SpatialGrid::new(Domain::UnitDisk, 0.125).unwrap());
        let a = rough_field(&g, 11);
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
        assert_eq!(a.values(), rough_field(&g, 11).values());
    }
}
