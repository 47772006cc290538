//! Reconstruction of the absorption from internal data `H = Sigma_a(<u>)^q <u>`.

use std::sync::Arc;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::AngularQuadrature;
use crate::diffusion::safe_ratio;
use crate::error::{Error, Result};
use crate::field::{AngularField, ScalarField};
use crate::par::map_range;
use crate::scattering::ScatteringModel;
use crate::source::BoundarySource;
use crate::transport::{solve_linear_rte_from, TransportConfig};

/// Vandermonde systems above this condition number are left unresolved.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub tol_inv: f64,
    pub max_iter: usize,
    /// Division floor relative to `sup f`.
    pub delta_floor: f64,
    pub q: f64,
    pub transport: TransportConfig,
}

impl InversionConfig {
    pub fn new(transport: TransportConfig) -> Self {
        Self {
            tol_inv: 1e-8,
            max_iter: 500,
            delta_floor: 1e-8,
            q: 1.0,
            transport,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_inv = tol;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_floor > 0.0) {
            return Err(Error::Domain(format!("delta_floor must be positive, got {}", self.delta_floor)));
        }
        if !(self.tol_inv > 0.0) || self.max_iter == 0 {
            return Err(Error::Domain("tol_inv and max_iter must be positive".into()));
        }
        if self.q < 1.0 {
            return Err(Error::Unsupported(format!(
                "data exponent q = {} < 1: only q >= 1 is supported",
                self.q
            )));
        }
        self.transport.validate()
    }
}

/// Outcome of one illumination.
#[derive(Debug, Clone)]
pub struct Illumination {
    /// Recovered `Sigma_a(<u>)`.
    pub absorption: ScalarField,
    /// Recovered `<u>`.
    pub mean: ScalarField,
    /// `|a^q m - H|_inf` per iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Cells where the division floor was active.
    pub floored_cells: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub illuminations: Vec<Illumination>,
    /// `sigma_{a,k}` estimates, `k = 0..=K`; empty for a single-datum recovery.
    /// Unrecoverable cells hold NaN.
    pub coefficients: Vec<ScalarField>,
    /// Per-cell condition number of the scaled Vandermonde system.
    pub condition: Vec<f64>,
    pub flagged_cells: Vec<usize>,
    /// Largest final data residual over the illuminations.
    pub residual: f64,
}

impl ReconstructionResult {
    pub fn absorption(&self) -> &ScalarField {
        &self.illuminations[0].absorption
    }

    pub fn mean(&self) -> &ScalarField {
        &self.illuminations[0].mean
    }

    /// Condition-number percentiles (0, 50, 90, 100) over resolved cells.
    pub fn condition_percentiles(&self) -> [f64; 4] {
        let mut c: Vec<f64> = self.condition.iter().copied().filter(|v| v.is_finite()).collect();
        if c.is_empty() {
            return [f64::NAN; 4];
        }
        c.sort_by(|a, b| a.total_cmp(b));
        let at = |p: f64| c[((p * (c.len() - 1) as f64).round() as usize).min(c.len() - 1)];
        [at(0.0), at(0.5), at(0.9), at(1.0)]
    }
}

/// `H (1 + level xi)` with `xi` iid uniform on `[-1, 1]`.
pub fn inject_noise(h: &ScalarField, level: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = h
        .values()
        .iter()
        .map(|x| x * (1.0 + level * rng.random_range(-1.0..=1.0)))
        .collect();
    ScalarField::new(h.grid().clone(), v).expect("same length")
}

/// Alternate `a = (H / m)^{1/q}` with `m = <u(a)>` until the data equation holds.
pub fn recover_absorption_single(
    h: &ScalarField,
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    f: &BoundarySource,
    quad: &Arc<AngularQuadrature>,
    cfg: &InversionConfig,
) -> Result<ReconstructionResult> {
    let ill = recover_one(h, sigma_s, k, f, quad, cfg)?;
    Ok(ReconstructionResult {
        residual: *ill.residuals.last().unwrap_or(&0.0),
        illuminations: vec![ill],
        coefficients: vec![],
        condition: vec![],
        flagged_cells: vec![],
    })
}

fn recover_one(
    h: &ScalarField,
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    f: &BoundarySource,
    quad: &Arc<AngularQuadrature>,
    cfg: &InversionConfig,
) -> Result<Illumination> {
    cfg.validate()?;
    h.check_same_grid(sigma_s)?;
    if let Some((i, v)) = h.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        let c = h.grid().center(i);
        return Err(Error::Data(format!(
            "internal data must be positive, H = {v} at ({:.4}, {:.4})",
            c[0], c[1]
        )));
    }
    let fbar = f.upper();
    let floor = cfg.delta_floor * fbar;
    let q = cfg.q;
    let grid = h.grid().clone();

    let a0 = h.map(|v| v / fbar);
    let first = solve_linear_rte_from(&a0, sigma_s, k, f, quad, &cfg.transport, None)?;
    let mut m = first.u.angular_average();
    let mut u_prev: AngularField = first.u;
    let mut residuals: Vec<f64> = Vec::new();

    for n in 1..=cfg.max_iter {
        let mut floored = Vec::new();
        let a: Vec<f64> = m
            .values()
            .iter()
            .zip(h.values())
            .enumerate()
            .map(|(i, (&mi, &hi))| {
                if mi < floor {
                    floored.push(i);
                }
                (hi / mi.max(floor)).powf(1.0 / q)
            })
            .collect();
        let a = ScalarField::new(grid.clone(), a)?;
        let mut tcfg = cfg.transport.clone();
        if let Some(&r) = residuals.last() {
            let hmax = h.max();
            tcfg.tol_si = (1e-3 * r / hmax).min(1e-4).max(cfg.transport.tol_si);
        }
        let lin = solve_linear_rte_from(&a, sigma_s, k, f, quad, &tcfg, Some(&u_prev))?;
        let next = lin.u.angular_average();
        let res = a
            .values()
            .iter()
            .zip(next.values())
            .zip(h.values())
            .fold(0.0f64, |acc, ((ai, mi), hi)| acc.max((ai.powf(q) * mi - hi).abs()));
        residuals.push(res);
        debug!("inversion step {n}: data residual {res:.3e}");
        m = next;
        u_prev = lin.u;
        if res <= cfg.tol_inv && tcfg.tol_si <= cfg.transport.tol_si {
            if !floored.is_empty() {
                warn!("{} cells hit the division floor", floored.len());
            }
            return Ok(Illumination {
                absorption: a,
                mean: m,
                residuals,
                iterations: n,
                floored_cells: floored,
            });
        }
    }
    Err(Error::Iteration {
        stage: "inversion",
        iterations: cfg.max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
        trace: residuals,
    })
}

/// Coefficients of `a = sum_k c_k m^k` from `K + 1` samples; `None` when the scaled
/// system is too ill-conditioned. Returns the condition number alongside.
pub fn vandermonde_solve(m: &[f64], a: &[f64]) -> (Option<Vec<f64>>, f64) {
    let n = m.len();
    let scale: Vec<f64> = (0..n)
        .map(|k| m.iter().fold(0.0f64, |s, x| s.max(x.abs().powi(k as i32))))
        .collect();
    if scale.iter().any(|s| *s == 0.0) {
        return (None, f64::INFINITY);
    }
    let v = DMatrix::from_fn(n, n, |i, k| m[i].powi(k as i32) / scale[k]);
    let sv = v.clone().svd(false, false).singular_values;
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), s| (hi.max(*s), lo.min(*s)));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return (None, cond);
    }
    match v.lu().solve(&DVector::from_column_slice(a)) {
        Some(c) => (Some(c.iter().zip(&scale).map(|(c, s)| c / s).collect()), cond),
        None => (None, f64::INFINITY),
    }
}

/// Recover `sigma_{a,k}`, `k = 0..=K`, from `K + 1` illuminations with strictly
/// increasing sources.
pub fn recover_mpa_coefficients(
    h_list: &[ScalarField],
    f_list: &[BoundarySource],
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    quad: &Arc<AngularQuadrature>,
    cfg: &InversionConfig,
) -> Result<ReconstructionResult> {
    if h_list.is_empty() || h_list.len() != f_list.len() {
        return Err(Error::Data(format!(
            "need one data field per source, got {} fields and {} sources",
            h_list.len(),
            f_list.len()
        )));
    }
    check_ordered_sources(f_list)?;
    let illuminations = h_list
        .iter()
        .zip(f_list)
        .map(|(h, f)| recover_one(h, sigma_s, k, f, quad, cfg))
        .collect::<Result<Vec<_>>>()?;
    let grid = sigma_s.grid().clone();
    let n = grid.len();
    for pair in illuminations.windows(2) {
        for i in 0..n {
            let (lo, hi) = (pair[0].mean.values()[i], pair[1].mean.values()[i]);
            if !(lo < hi) {
                let c = grid.center(i);
                return Err(Error::DataConsistency {
                    cell: i,
                    x: c[0],
                    y: c[1],
                    detail: format!("recovered averages not increasing with the source: {lo} >= {hi}"),
                });
            }
        }
    }
    let degree = illuminations.len() - 1;
    let solved = map_range(n, |i| {
        let m: Vec<f64> = illuminations.iter().map(|il| il.mean.values()[i]).collect();
        let a: Vec<f64> = illuminations.iter().map(|il| il.absorption.values()[i]).collect();
        vandermonde_solve(&m, &a)
    });
    let mut coeffs = vec![vec![f64::NAN; n]; degree + 1];
    let mut condition = Vec::with_capacity(n);
    let mut flagged = Vec::new();
    for (i, (c, cond)) in solved.into_iter().enumerate() {
        condition.push(cond);
        match c {
            Some(c) => {
                for (kk, v) in c.into_iter().enumerate() {
                    coeffs[kk][i] = v;
                }
            }
            None => flagged.push(i),
        }
    }
    if !flagged.is_empty() {
        warn!("{} cells have ill-conditioned Vandermonde systems and were not resolved", flagged.len());
    }
    let residual = illuminations
        .iter()
        .map(|il| *il.residuals.last().unwrap_or(&0.0))
        .fold(0.0, f64::max);
    Ok(ReconstructionResult {
        illuminations,
        coefficients: coeffs
            .into_iter()
            .map(|v| ScalarField::new(grid.clone(), v))
            .collect::<Result<_>>()?,
        condition,
        flagged_cells: flagged,
        residual,
    })
}

/// Sources must satisfy `0 < f_0 < f_1 < ...`.
pub fn check_ordered_sources(f_list: &[BoundarySource]) -> Result<()> {
    if let Some(f) = f_list.first() {
        f.check_bounded_below()?;
    }
    for (i, w) in f_list.windows(2).enumerate() {
        if !(w[0].upper() < w[1].lower()) {
            return Err(Error::Data(format!(
                "sources must be strictly increasing (0 < f_0 < f_1 < ...): source {} (sup {}) is not below source {} (inf {})",
                i,
                w[0].upper(),
                i + 1,
                w[1].lower()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// `|w (S - S~)/S_ref [<u~>]|_1` against `|w (H - H~)/S_ref|_1`. The `<u~>` factor
/// enters only when `weight` and `mean_tilde` are supplied.
pub fn l1_stability_report(
    sigma: &ScalarField,
    sigma_tilde: &ScalarField,
    h: &ScalarField,
    h_tilde: &ScalarField,
    sigma_ref: &ScalarField,
    weight: Option<&ScalarField>,
    mean_tilde: Option<&ScalarField>,
) -> Result<StabilityRecord> {
    for f in [sigma_tilde, h, h_tilde, sigma_ref] {
        sigma.check_same_grid(f)?;
    }
    if sigma_ref.min() <= 0.0 {
        return Err(Error::Domain("reference absorption must be positive".into()));
    }
    let n = sigma.len();
    let w = |i: usize| weight.map_or(1.0, |w| w.values()[i]);
    let extra = |i: usize| match (weight, mean_tilde) {
        (Some(_), Some(m)) => m.values()[i],
        _ => 1.0,
    };
    let h2 = sigma.grid().cell_area();
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for i in 0..n {
        let r = sigma_ref.values()[i];
        lhs += (w(i) * (sigma.values()[i] - sigma_tilde.values()[i]) / r * extra(i)).abs();
        rhs += (w(i) * (h.values()[i] - h_tilde.values()[i]) / r).abs();
    }
    let (lhs, rhs) = (lhs * h2, rhs * h2);
    Ok(StabilityRecord {
        lhs,
        rhs,
        ratio: safe_ratio(lhs, rhs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpBoundRecord {
    pub lhs: f64,
    pub rhs_bound: f64,
    pub constant: f64,
    pub holds: bool,
}

/// `|S - S~|_p <= C |Omega|^{(1/p)(1-1/p)} g^{1-1/p} |H - H~|_p^{1/p}` with `C` taken
/// from the `p = 1` ratio of the same pair.
pub fn lp_interpolated_bound_check(
    sigma: &ScalarField,
    sigma_tilde: &ScalarField,
    h: &ScalarField,
    h_tilde: &ScalarField,
    p: f64,
    g_of_fbar: f64,
) -> Result<LpBoundRecord> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p must lie in [1, inf), got {p}")));
    }
    let ds = sigma.zip_map(sigma_tilde, |a, b| a - b)?;
    let dh = h.zip_map(h_tilde, |a, b| a - b)?;
    let c = safe_ratio(ds.lp_norm(1.0), dh.lp_norm(1.0));
    let vol = sigma.grid().active_area();
    let lhs = ds.lp_norm(p);
    let rhs_bound = if lhs == 0.0 {
        0.0
    } else {
        c * vol.powf((1.0 / p) * (1.0 - 1.0 / p)) * g_of_fbar.powf(1.0 - 1.0 / p) * dh.lp_norm(p).powf(1.0 / p)
    };
    Ok(LpBoundRecord {
        lhs,
        rhs_bound,
        constant: c,
        holds: lhs <= rhs_bound * (1.0 + 1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{fixed_point_solve, internal_data, FixedPointConfig};
    use crate::geometry::Domain;
    use crate::grid::SpatialGrid;
    use crate::mpa::MpaModel;

    fn setup() -> (Arc<SpatialGrid>, Arc<AngularQuadrature>) {
        (
            Arc::new(SpatialGrid::new(Domain::UnitDisk, 1.0 / 16.0).unwrap()),
            Arc::new(AngularQuadrature::uniform(8).unwrap()),
        )
    }

    fn interior_sup(a: &ScalarField, b: impl Fn(usize) -> f64) -> f64 {
        let g = a.grid();
        (0..g.len())
            .filter(|&i| g.distance_to_boundary(i) > 0.1)
            .map(|i| (a.values()[i] - b(i)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_absorption_round_trip() {
        let (g, q) = setup();
        let model = MpaModel::constant(&g, &[0.8]).unwrap();
        let s = ScalarField::constant(g.clone(), 1.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let tcfg = TransportConfig::for_grid(&g);
        let sol = fixed_point_solve(&model, &s, &ScatteringModel::Isotropic, &f, &q, &FixedPointConfig::new(tcfg.clone()))
            .unwrap();
        let h = internal_data(&model, &sol).unwrap();
        let cfg = InversionConfig::new(tcfg);
        let r = recover_absorption_single(&h, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        assert!(interior_sup(r.absorption(), |_| 0.8) < 1e-3);
        // data equation
        let a = r.absorption().values();
        let m = r.mean().values();
        assert!((0..g.len()).all(|i| (a[i] * m[i] - h.values()[i]).abs() <= cfg.tol_inv));
        let again = recover_absorption_single(&h.map(|v| v * 1.0), &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        assert_eq!(again.absorption().values(), r.absorption().values());
    }

    #[test]
    fn nonlinear_round_trip_matches_law() {
        let (g, q) = setup();
        let model = MpaModel::constant(&g, &[0.5, 1.0]).unwrap();
        let s = ScalarField::constant(g.clone(), 1.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let tcfg = TransportConfig::for_grid(&g);
        let sol = fixed_point_solve(&model, &s, &ScatteringModel::Isotropic, &f, &q, &FixedPointConfig::new(tcfg.clone()))
            .unwrap();
        let h = internal_data(&model, &sol).unwrap();
        let r = recover_absorption_single(&h, &s, &ScatteringModel::Isotropic, &f, &q, &InversionConfig::new(tcfg)).unwrap();
        let law = model.eval_sigma_a(r.mean()).unwrap();
        assert!(interior_sup(r.absorption(), |i| law.values()[i]) < 1e-3);
    }

    #[test]
    fn vandermonde_closed_form() {
        let (c, cond) = vandermonde_solve(&[0.5, 1.0], &[1.25, 1.5]);
        let c = c.unwrap();
        assert!((c[0] - 1.0).abs() < 1e-14 && (c[1] - 0.5).abs() < 1e-14);
        assert!(cond.is_finite() && cond > 1.0);
        let (c, cond) = vandermonde_solve(&[0.5, 0.5], &[1.0, 1.0]);
        assert!(c.is_none() && cond > MAX_CONDITION);
        let (c, _) = vandermonde_solve(&[0.7], &[2.0]);
        assert_eq!(c.unwrap(), vec![2.0]);
    }

    #[test]
    fn source_order_and_positivity_gates() {
        let (g, q) = setup();
        let s = ScalarField::constant(g.clone(), 1.0);
        let one = ScalarField::constant(g.clone(), 1.0);
        let cfg = InversionConfig::new(TransportConfig::for_grid(&g));
        let f = |c| BoundarySource::constant(c).unwrap();
        let err = recover_mpa_coefficients(&[one.clone(), one.clone()], &[f(1.0), f(0.5)], &s, &ScatteringModel::Isotropic, &q, &cfg)
            .unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
        let bad = ScalarField::from_fn(g.clone(), |p| p[0]);
        assert!(matches!(
            recover_absorption_single(&bad, &s, &ScatteringModel::Isotropic, &f(1.0), &q, &cfg),
            Err(Error::Data(_))
        ));
        assert!(recover_absorption_single(&one, &s, &ScatteringModel::Isotropic, &f(1.0), &q, &cfg.clone().with_q(0.5))
            .is_err());
    }

    #[test]
    fn reports_follow_conventions() {
        let (g, _) = setup();
        let a = ScalarField::constant(g.clone(), 1.0);
        let b = ScalarField::constant(g.clone(), 1.5);
        let r = l1_stability_report(&a, &a, &a, &a, &a, None, None).unwrap();
        assert_eq!(r.ratio, 0.0);
        let r = l1_stability_report(&a, &b, &a, &b, &a, None, None).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-14);
        let p1 = lp_interpolated_bound_check(&a, &b, &a, &b, 1.0, 2.0).unwrap();
        assert!(p1.holds && (p1.lhs - p1.rhs_bound).abs() < 1e-12);
        let same = lp_interpolated_bound_check(&a, &a, &a, &a, 2.0, 2.0).unwrap();
        assert!(same.holds && same.lhs == 0.0 && same.rhs_bound == 0.0);
    }

    #[test]
    fn noise_is_seeded() {
        let (g, _) = setup();
        let h = ScalarField::constant(g, 2.0);
        let a = inject_noise(&h, 0.01, 7);
        assert_eq!(a.values(), inject_noise(&h, 0.01, 7).values());
        assert!(a.values().iter().all(|v| (v - 2.0).abs() <= 0.02 + 1e-15));
        assert_eq!(inject_noise(&h, 0.0, 3).values(), h.values());
    }
}
