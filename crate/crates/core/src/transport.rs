//! Linear transport with frozen coefficients: long-characteristic sweeps and the
//! scattering iteration.

use std::sync::Arc;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::angular::AngularQuadrature;
use crate::error::{Error, Result};
use crate::field::{AngularField, ScalarField};
use crate::geometry::Point;
use crate::grid::SpatialGrid;
use crate::krylov::gmres;
use crate::par::{for_each_chunk, map_range};
use crate::scattering::ScatteringModel;
use crate::source::BoundarySource;

/// Slack applied to the pointwise bound checks after convergence.
pub const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMethod {
    /// Plain source iteration `u <- sweep(sigma_s K u)`.
    SourceIteration,
    /// Restarted GMRES on the same fixed point; the unknown is the scalar flux for
    /// isotropic scattering and the full angular density otherwise.
    Krylov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub h_ray: f64,
    pub tol_si: f64,
    pub max_iter: usize,
    pub method: LinearMethod,
    #[serde(default = "default_restart")]
    pub restart: usize,
}

fn default_restart() -> usize {
    40
}

impl TransportConfig {
    /// Ray step `h / 2`, tolerance `1e-10`, source iteration.
    pub fn for_grid(grid: &SpatialGrid) -> Self {
        Self {
            h_ray: 0.5 * grid.h(),
            tol_si: 1e-10,
            max_iter: 5_000,
            method: LinearMethod::SourceIteration,
            restart: default_restart(),
        }
    }

    /// Scaled regime: the scattering contraction degrades like `1 - O(eps^2)`, so the
    /// iteration cap is `50 / eps^2` and GMRES is used.
    pub fn for_epsilon(grid: &SpatialGrid, eps: f64) -> Self {
        Self {
            max_iter: (50.0 / (eps * eps)).ceil() as usize,
            method: LinearMethod::Krylov,
            ..Self::for_grid(grid)
        }
    }

    pub fn with_method(mut self, method: LinearMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_si = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_ray > 0.0 && self.h_ray.is_finite()) {
            return Err(Error::Domain(format!("h_ray must be positive, got {}", self.h_ray)));
        }
        if !(self.tol_si > 0.0) {
            return Err(Error::Domain(format!("tol_si must be positive, got {}", self.tol_si)));
        }
        if self.max_iter == 0 || self.restart == 0 {
            return Err(Error::Domain("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of `int_0^1 e^{-d t} ((1 - t) a + t b) dt = alpha a + beta b`, with
/// `em = e^{-d} - 1`.
#[inline]
fn segment_weights(d: f64, em: f64) -> (f64, f64) {
    let d2 = d * d;
    if d < 1e-2 {
        (
            0.5 - d / 6.0 + d2 / 24.0 - d2 * d / 120.0 + d2 * d2 / 720.0 - d2 * d2 * d / 5040.0,
            0.5 - d / 3.0 + d2 / 8.0 - d2 * d / 30.0 + d2 * d2 / 144.0 - d2 * d2 * d / 840.0,
        )
    } else {
        ((d + em) / d2, (-em - d * (1.0 + em)) / d2)
    }
}

/// Optical depth `int_0^s sigma(x - t v) dt` by the composite trapezoid rule with step
/// `h_ray` (last step shortened to end at `s`) on a boxed field.
pub(crate) fn optical_depth_boxed(
    grid: &SpatialGrid,
    sigma_box: &[f64],
    x: Point,
    v: Point,
    s: f64,
    h_ray: f64,
) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let n = (s / h_ray).floor() as usize;
    let mut prev = grid.interpolate(sigma_box, x);
    let mut tau = 0.0;
    for k in 1..=n {
        let t = k as f64 * h_ray;
        let cur = grid.interpolate(sigma_box, [x[0] - t * v[0], x[1] - t * v[1]]);
        tau += 0.5 * h_ray * (prev + cur);
        prev = cur;
    }
    let rem = s - n as f64 * h_ray;
    if rem > 1e-12 * h_ray {
        let cur = grid.interpolate(sigma_box, [x[0] - s * v[0], x[1] - s * v[1]]);
        tau += 0.5 * rem * (prev + cur);
    }
    tau
}

/// `E(x, x - s v) = exp(-int_0^s sigma_t(x - t v) dt)`.
pub fn attenuation(x: Point, v: Point, s: f64, sigma_t: &ScalarField, h_ray: f64) -> Result<f64> {
    let grid = sigma_t.grid();
    let tau = grid.domain().exit_distance(x, v)?;
    if !(s >= 0.0) || s > tau * (1.0 + 1e-12) + 1e-14 {
        return Err(Error::Domain(format!(
            "path length {s} outside [0, {tau}] for the ray from ({}, {})",
            x[0], x[1]
        )));
    }
    let s = s.min(tau);
    Ok((-optical_depth_boxed(grid, &sigma_t.boxed(), x, v, s, h_ray)).exp())
}

/// Attenuation along the full backward chord of every (cell, direction) pair.
#[derive(Debug, Clone)]
pub struct AttenuationCache {
    n_dirs: usize,
    values: Vec<f64>,
}

impl AttenuationCache {
    pub fn build(sigma_t: &ScalarField, quad: &AngularQuadrature, h_ray: f64) -> Self {
        let grid = sigma_t.grid();
        let sigma_box = sigma_t.boxed();
        let nv = quad.len();
        let mut values = vec![0.0; grid.len() * nv];
        for_each_chunk(&mut values, nv, |i, chunk| {
            let x = grid.center(i);
            for (j, e) in chunk.iter_mut().enumerate() {
                let v = quad.dir(j);
                let tau = grid.domain().exit_distance_unchecked(x, v);
                *e = (-optical_depth_boxed(grid, &sigma_box, x, v, tau, h_ray)).exp();
            }
        });
        Self { n_dirs: nv, values }
    }

    /// `E(x_i, x_i - tau_-(x_i, v_j) v_j)`.
    pub fn exit(&self, cell: usize, dir: usize) -> f64 {
        self.values[cell * self.n_dirs + dir]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Scattering source sampled for the sweep.
enum SourceBoxes {
    Zero,
    /// Same boxed field for every direction.
    Isotropic(Vec<f64>),
    /// One boxed field per direction.
    PerDirection(Vec<Vec<f64>>),
}

impl SourceBoxes {
    fn from_angular(q: &AngularField) -> Self {
        let grid = q.grid();
        let nv = q.n_dirs();
        let per_dir = (0..nv)
            .map(|j| {
                let col: Vec<f64> = (0..grid.len()).map(|i| q.get(i, j)).collect();
                grid.to_box(&col)
            })
            .collect();
        SourceBoxes::PerDirection(per_dir)
    }

    #[inline]
    fn get(&self, j: usize) -> Option<&[f64]> {
        match self {
            SourceBoxes::Zero => None,
            SourceBoxes::Isotropic(b) => Some(b),
            SourceBoxes::PerDirection(b) => Some(&b[j]),
        }
    }
}

/// Position of the ray node `x_i - k h_ray v_j` relative to the stencil of cell `i`.
/// Cell centres differ by whole cells, so the fractional part depends on `(j, k)` only.
#[derive(Debug, Clone, Copy)]
struct NodeOffset {
    off: isize,
    tx: f64,
    ty: f64,
}

#[derive(Debug, Clone, Copy)]
struct RayLayout {
    start: u32,
    n_full: u32,
    partial: bool,
}

fn direction_tables(grid: &SpatialGrid, quad: &AngularQuadrature, h_ray: f64) -> Vec<Vec<NodeOffset>> {
    let kmax = (grid.domain().diameter() / h_ray).ceil() as usize + 2;
    let nx = grid.nx() as isize;
    quad.dirs()
        .iter()
        .map(|v| {
            (0..=kmax)
                .map(|k| {
                    let a = -(k as f64) * h_ray * v[0] / grid.h();
                    let b = -(k as f64) * h_ray * v[1] / grid.h();
                    let (fa, fb) = (a.floor(), b.floor());
                    NodeOffset {
                        off: fa as isize + nx * fb as isize,
                        tx: a - fa,
                        ty: b - fb,
                    }
                })
                .collect()
        })
        .collect()
}

/// Characteristic tracer for fixed `sigma_t`. Nodes sit at `x - k h_ray v` plus the
/// exit point; the weight of the source at each node is precomputed so repeated sweeps
/// with the same attenuation only interpolate the source.
struct Sweeper<'a> {
    grid: &'a SpatialGrid,
    quad: &'a AngularQuadrature,
    tables: Vec<Vec<NodeOffset>>,
    bases: Vec<usize>,
    layout: Vec<RayLayout>,
    weights: Vec<Vec<f64>>,
    exit_att: Vec<f64>,
    tau: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(sigma_t: &'a ScalarField, quad: &'a AngularQuadrature, h_ray: f64) -> Self {
        let grid: &SpatialGrid = sigma_t.grid();
        let sigma_box = sigma_t.boxed();
        let tables = direction_tables(grid, quad, h_ray);
        let bases: Vec<usize> = (0..grid.len())
            .map(|i| {
                let (ix, iy) = grid.cell(i);
                grid.box_index(ix, iy)
            })
            .collect();
        let nv = quad.len();

        #[allow(clippy::type_complexity)]
        let per_cell: Vec<(Vec<f64>, Vec<RayLayout>, Vec<f64>, Vec<f64>)> = map_range(grid.len(), |i| {
            let x = grid.center(i);
            let mut w = Vec::new();
            let mut lay = Vec::with_capacity(nv);
            let mut att_out = Vec::with_capacity(nv);
            let mut tau_out = Vec::with_capacity(nv);
            let mut sig = Vec::new();
            let mut seg = Vec::new();
            for (j, &v) in quad.dirs().iter().enumerate() {
                let tau = grid.domain().exit_distance_unchecked(x, v);
                let n_full = ((tau / h_ray).floor() as usize).min(tables[j].len() - 1);
                let rem = tau - n_full as f64 * h_ray;
                let partial = rem > 1e-12 * h_ray;
                sig.clear();
                seg.clear();
                for node in &tables[j][..=n_full] {
                    let b = (bases[i] as isize + node.off) as usize;
                    sig.push(grid.bilinear(&sigma_box, b, node.tx, node.ty));
                }
                seg.extend(std::iter::repeat_n(h_ray, n_full));
                if partial {
                    sig.push(grid.interpolate(&sigma_box, [x[0] - tau * v[0], x[1] - tau * v[1]]));
                    seg.push(rem);
                }
                let start = w.len();
                w.resize(start + sig.len(), 0.0);
                let node_w = &mut w[start..];
                let mut att = 1.0;
                for (k, &delta) in seg.iter().enumerate() {
                    let d = 0.5 * delta * (sig[k] + sig[k + 1]);
                    let em = (-d).exp_m1();
                    let (a, b) = segment_weights(d, em);
                    node_w[k] += att * delta * a;
                    node_w[k + 1] += att * delta * b;
                    att *= 1.0 + em;
                }
                lay.push(RayLayout {
                    start: start as u32,
                    n_full: n_full as u32,
                    partial,
                });
                att_out.push(att);
                tau_out.push(tau);
            }
            (w, lay, att_out, tau_out)
        });

        let mut weights = Vec::with_capacity(grid.len());
        let mut layout = Vec::with_capacity(grid.len() * nv);
        let mut exit_att = Vec::with_capacity(grid.len() * nv);
        let mut tau = Vec::with_capacity(grid.len() * nv);
        for (w, l, a, t) in per_cell {
            weights.push(w);
            layout.extend(l);
            exit_att.extend(a);
            tau.extend(t);
        }
        Self {
            grid,
            quad,
            tables,
            bases,
            layout,
            weights,
            exit_att,
            tau,
        }
    }

    /// `u(x, v) = E(x, x - tau v) f(x - tau v, v) + int_0^tau E(x, x - s v) q(x - s v) ds`.
    /// On each step the source and the optical depth are taken linear and the step
    /// integral is exact for that model.
    #[inline]
    fn trace(&self, i: usize, j: usize, q: Option<&[f64]>, f: Option<&BoundarySource>) -> f64 {
        let nv = self.quad.len();
        let r = i * nv + j;
        let lay = self.layout[r];
        let v = self.quad.dir(j);
        let mut acc = 0.0;
        if let Some(qb) = q {
            let n = lay.n_full as usize;
            let w = &self.weights[i][lay.start as usize..];
            let tab = &self.tables[j][..=n];
            let base = self.bases[i] as isize;
            for (node, wk) in tab.iter().zip(w) {
                acc += wk * self.grid.bilinear(qb, (base + node.off) as usize, node.tx, node.ty);
            }
            if lay.partial {
                let x = self.grid.center(i);
                let t = self.tau[r];
                acc += w[n + 1] * self.grid.interpolate(qb, [x[0] - t * v[0], x[1] - t * v[1]]);
            }
        }
        if let Some(f) = f {
            let fb = match f.as_constant() {
                Some(c) => c,
                None => {
                    let x = self.grid.center(i);
                    let t = self.tau[r];
                    f.eval([x[0] - t * v[0], x[1] - t * v[1]], v)
                }
            };
            acc += self.exit_att[r] * fb;
        }
        acc
    }

    fn sweep(&self, q: &SourceBoxes, f: Option<&BoundarySource>) -> Vec<f64> {
        let nv = self.quad.len();
        let mut out = vec![0.0; self.grid.len() * nv];
        for_each_chunk(&mut out, nv, |i, chunk| {
            for (j, o) in chunk.iter_mut().enumerate() {
                *o = self.trace(i, j, q.get(j), f);
            }
        });
        out
    }

    /// Angular average of the sweep without storing the angular field.
    fn sweep_average(&self, q: &SourceBoxes, f: Option<&BoundarySource>) -> Vec<f64> {
        let w = self.quad.weight();
        map_range(self.grid.len(), |i| {
            (0..self.quad.len()).map(|j| self.trace(i, j, q.get(j), f)).sum::<f64>() * w
        })
    }
}

/// One transport sweep with a given volume source `q` and boundary data `f`.
pub fn sweep(q: &AngularField, sigma_t: &ScalarField, f: &BoundarySource, h_ray: f64) -> Result<AngularField> {
    if **q.grid() != **sigma_t.grid() {
        return Err(Error::GridMismatch);
    }
    if sigma_t.min() < 0.0 {
        return Err(Error::Domain("total attenuation must be nonnegative".into()));
    }
    let sw = Sweeper::new(sigma_t, q.quadrature(), h_ray);
    let src = SourceBoxes::from_angular(q);
    let values = sw.sweep(&src, Some(f));
    AngularField::new(q.grid().clone(), q.quadrature().clone(), values)
}

/// Sweep with zero volume source.
pub fn sweep_boundary(
    sigma_t: &ScalarField,
    quad: &Arc<AngularQuadrature>,
    f: &BoundarySource,
    h_ray: f64,
) -> Result<AngularField> {
    let sw = Sweeper::new(sigma_t, quad, h_ray);
    let values = sw.sweep(&SourceBoxes::Zero, Some(f));
    AngularField::new(sigma_t.grid().clone(), quad.clone(), values)
}

/// Converged linear transport solve.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub u: AngularField,
    pub iterations: usize,
    /// Relative residual per iteration (successive-iterate change for source
    /// iteration, GMRES residual for the Krylov method).
    pub history: Vec<f64>,
}

/// Sources of the scattering map for fixed coefficients.
struct Operator<'a> {
    sweeper: Sweeper<'a>,
    grid: &'a Arc<SpatialGrid>,
    quad: &'a Arc<AngularQuadrature>,
    sigma_s: &'a ScalarField,
    k: &'a ScatteringModel,
}

impl Operator<'_> {
    fn source_from_scalar(&self, phi: &[f64]) -> SourceBoxes {
        let q: Vec<f64> = phi.iter().zip(self.sigma_s.values()).map(|(p, s)| p * s).collect();
        SourceBoxes::Isotropic(self.grid.to_box(&q))
    }

    fn source_from_angular(&self, u: &[f64]) -> SourceBoxes {
        let nv = self.quad.len();
        let w = self.quad.weight();
        if self.k.is_isotropic() {
            let phi: Vec<f64> = u.chunks_exact(nv).map(|c| c.iter().sum::<f64>() * w).collect();
            return self.source_from_scalar(&phi);
        }
        let mut q = vec![0.0; u.len()];
        for (i, (src, dst)) in u.chunks_exact(nv).zip(q.chunks_exact_mut(nv)).enumerate() {
            self.k.apply_cell(w, src, dst);
            let s = self.sigma_s.values()[i];
            dst.iter_mut().for_each(|x| *x *= s);
        }
        let field = AngularField::new(self.grid.clone(), self.quad.clone(), q)
            .expect("scattering source has the field's shape");
        SourceBoxes::from_angular(&field)
    }
}

fn sup_rel_change(new: &[f64], old: &[f64]) -> f64 {
    let scale = new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = new.iter().zip(old).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Solve `v . grad u + (sigma_a + sigma_s) u = sigma_s K u` with inflow data `f`.
pub fn solve_linear_rte(
    sigma_a: &ScalarField,
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    f: &BoundarySource,
    quad: &Arc<AngularQuadrature>,
    cfg: &TransportConfig,
) -> Result<LinearSolution> {
    solve_linear_rte_from(sigma_a, sigma_s, k, f, quad, cfg, None)
}

/// [`solve_linear_rte`] with an optional starting guess for the angular density.
pub fn solve_linear_rte_from(
    sigma_a: &ScalarField,
    sigma_s: &ScalarField,
    k: &ScatteringModel,
    f: &BoundarySource,
    quad: &Arc<AngularQuadrature>,
    cfg: &TransportConfig,
    init: Option<&AngularField>,
) -> Result<LinearSolution> {
    cfg.validate()?;
    sigma_a.check_same_grid(sigma_s)?;
    if sigma_a.min() <= 0.0 {
        return Err(Error::Domain(format!(
            "absorption must be bounded below by a positive constant, min = {}",
            sigma_a.min()
        )));
    }
    if sigma_s.min() < 0.0 {
        return Err(Error::Domain("scattering coefficient must be nonnegative".into()));
    }
    if let ScatteringModel::Tabulated { n, .. } = k {
        if *n != quad.len() {
            return Err(Error::Model(format!(
                "phase table built for {n} directions, quadrature has {}",
                quad.len()
            )));
        }
    }
    let sigma_t = sigma_a.zip_map(sigma_s, |a, s| a + s)?;
    let grid = sigma_a.grid();
    let op = Operator {
        sweeper: Sweeper::new(&sigma_t, quad, cfg.h_ray),
        grid,
        quad,
        sigma_s,
        k,
    };

    let sol = if sigma_s.max() == 0.0 {
        let u = op.sweeper.sweep(&SourceBoxes::Zero, Some(f));
        LinearSolution {
            u: AngularField::new(grid.clone(), quad.clone(), u)?,
            iterations: 1,
            history: vec![0.0],
        }
    } else {
        match cfg.method {
            LinearMethod::SourceIteration => source_iteration(&op, f, cfg, init)?,
            LinearMethod::Krylov => krylov(&op, f, cfg, init)?,
        }
    };
    check_bounds(&sol.u, &sigma_t, f)?;
    Ok(sol)
}

fn source_iteration(
    op: &Operator,
    f: &BoundarySource,
    cfg: &TransportConfig,
    init: Option<&AngularField>,
) -> Result<LinearSolution> {
    let mut u = match init {
        Some(u0) => op.sweeper.sweep(&op.source_from_angular(u0.values()), Some(f)),
        None => op.sweeper.sweep(&SourceBoxes::Zero, Some(f)),
    };
    let mut history = Vec::new();
    for it in 1..=cfg.max_iter {
        let next = op.sweeper.sweep(&op.source_from_angular(&u), Some(f));
        let res = sup_rel_change(&next, &u);
        history.push(res);
        u = next;
        if res <= cfg.tol_si {
            debug!("source iteration converged in {it} steps, residual {res:.3e}");
            return Ok(LinearSolution {
                u: AngularField::new(op.grid.clone(), op.quad.clone(), u)?,
                iterations: it,
                history,
            });
        }
    }
    Err(Error::Iteration {
        stage: "source iteration",
        iterations: cfg.max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
        trace: history,
    })
}

fn krylov(
    op: &Operator,
    f: &BoundarySource,
    cfg: &TransportConfig,
    init: Option<&AngularField>,
) -> Result<LinearSolution> {
    let nv = op.quad.len();
    let w = op.quad.weight();
    let grid = op.grid;
    if op.k.is_isotropic() {
        // unknown: scalar flux phi with (I - T) phi = <sweep(0, f)>
        let b = op.sweeper.sweep_average(&SourceBoxes::Zero, Some(f));
        let x0 = match init {
            Some(u0) => u0.angular_average().into_values(),
            None => b.clone(),
        };
        let out = gmres(
            |x, y| {
                let t = op.sweeper.sweep_average(&op.source_from_scalar(x), None);
                for ((yi, xi), ti) in y.iter_mut().zip(x).zip(&t) {
                    *yi = xi - ti;
                }
                Ok(())
            },
            &b,
            x0,
            cfg.tol_si,
            cfg.restart,
            cfg.max_iter,
        )
        .map_err(|e| relabel(e, "transport GMRES"))?;
        let u = op.sweeper.sweep(&op.source_from_scalar(&out.x), Some(f));
        let phi: Vec<f64> = u.chunks_exact(nv).map(|c| c.iter().sum::<f64>() * w).collect();
        let mut history = out.history;
        history.push(sup_rel_change(&phi, &out.x));
        Ok(LinearSolution {
            u: AngularField::new(grid.clone(), op.quad.clone(), u)?,
            iterations: out.iterations + 1,
            history,
        })
    } else {
        let b = op.sweeper.sweep(&SourceBoxes::Zero, Some(f));
        let x0 = match init {
            Some(u0) => u0.values().to_vec(),
            None => b.clone(),
        };
        let out = gmres(
            |x, y| {
                let t = op.sweeper.sweep(&op.source_from_angular(x), None);
                for ((yi, xi), ti) in y.iter_mut().zip(x).zip(&t) {
                    *yi = xi - ti;
                }
                Ok(())
            },
            &b,
            x0,
            cfg.tol_si,
            cfg.restart,
            cfg.max_iter,
        )
        .map_err(|e| relabel(e, "transport GMRES"))?;
        let u = op.sweeper.sweep(&op.source_from_angular(&out.x), Some(f));
        let mut history = out.history;
        history.push(sup_rel_change(&u, &out.x));
        Ok(LinearSolution {
            u: AngularField::new(grid.clone(), op.quad.clone(), u)?,
            iterations: out.iterations + 1,
            history,
        })
    }
}

fn relabel(e: Error, stage: &'static str) -> Error {
    match e {
        Error::Iteration { iterations, residual, trace, .. } => Error::Iteration {
            stage,
            iterations,
            residual,
            trace,
        },
        other => other,
    }
}

/// Lower bound `inf f * exp(-diam * sup sigma_t)` of the unscattered part, which the
/// full solution dominates.
pub fn attenuation_lower_bound(sigma_t: &ScalarField, f: &BoundarySource) -> f64 {
    f.lower() * (-sigma_t.grid().domain().diameter() * sigma_t.max()).exp()
}

fn check_bounds(u: &AngularField, sigma_t: &ScalarField, f: &BoundarySource) -> Result<()> {
    let slack = BOUND_SLACK * f.upper().max(1.0);
    let hi = u.max();
    if hi > f.upper() + slack {
        return Err(Error::NumericalIntegrity {
            stage: "linear transport",
            detail: format!("max u = {hi} exceeds sup f = {}", f.upper()),
        });
    }
    let lo = u.min();
    let bound = attenuation_lower_bound(sigma_t, f);
    if lo < bound - slack {
        return Err(Error::NumericalIntegrity {
            stage: "linear transport",
            detail: format!("min u = {lo} below the attenuation bound {bound}"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_abs_diff_eq;

    fn setup(h: f64, nv: usize) -> (Arc<SpatialGrid>, Arc<AngularQuadrature>) {
        (
            Arc::new(SpatialGrid::new(Domain::UnitDisk, h).unwrap()),
            Arc::new(AngularQuadrature::uniform(nv).unwrap()),
        )
    }

    /// Composite Simpson with many panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn segment_weights_are_continuous() {
        for d in [1e-2 * (1.0 - 1e-12), 1e-2] {
            let (a, b) = segment_weights(d, (-d).exp_m1());
            let oa = simpson(|t| (-d * t).exp() * (1.0 - t), 0.0, 1.0, 2000);
            let ob = simpson(|t| (-d * t).exp() * t, 0.0, 1.0, 2000);
            assert_abs_diff_eq!(a, oa, epsilon = 1e-13);
            assert_abs_diff_eq!(b, ob, epsilon = 1e-13);
        }
    }

    #[test]
    fn attenuation_examples() {
        let (g, _) = setup(1.0 / 32.0, 8);
        let two = ScalarField::constant(g.clone(), 2.0);
        assert_eq!(attenuation([0.1, 0.2], [1.0, 0.0], 0.0, &two, 1.0 / 64.0).unwrap(), 1.0);
        let e = attenuation([0.0, 0.0], [0.0, 1.0], 0.5, &two, 1.0 / 64.0).unwrap();
        assert_abs_diff_eq!(e, (-1.0f64).exp(), epsilon = 1e-13);
        assert!(attenuation([0.0, 0.0], [1.0, 0.0], 1.2, &two, 0.01).is_err());
        assert!(attenuation([1.5, 0.0], [1.0, 0.0], 0.1, &two, 0.01).is_err());
    }

    #[test]
    fn attenuation_matches_fine_quadrature() {
        let h = 1.0 / 64.0;
        let (g, _) = setup(h, 8);
        let sig = ScalarField::from_fn(g, |p| 1.0 + p[0] * p[0]);
        // ray from (0.9, 0) travelling towards -x, i.e. backward direction v = (1, 0)
        let e = attenuation([0.9, 0.0], [1.0, 0.0], 0.9, &sig, h / 2.0).unwrap();
        let exact = (-simpson(|t| 1.0 + (0.9 - t) * (0.9 - t), 0.0, 0.9, 20_000)).exp();
        // the bilinear field error dominates: O(h^2)
        assert_abs_diff_eq!(e, exact, epsilon = 2e-4);
        // the trapezoid part alone, with a very fine ray step
        let fine = attenuation([0.9, 0.0], [1.0, 0.0], 0.9, &sig, h / 200.0).unwrap();
        assert_abs_diff_eq!(e, fine, epsilon = 5e-5);
    }

    #[test]
    fn free_transport_of_constant_data() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let zero = ScalarField::constant(g.clone(), 0.0);
        let u = sweep_boundary(&zero, &q, &BoundarySource::constant(1.0).unwrap(), 1.0 / 32.0).unwrap();
        assert!(u.values().iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn pure_absorber_closed_form() {
        let (g, q) = setup(1.0 / 16.0, 16);
        let sig = ScalarField::constant(g.clone(), 1.3);
        let u = sweep_boundary(&sig, &q, &BoundarySource::constant(1.0).unwrap(), 1.0 / 32.0).unwrap();
        for i in 0..g.len() {
            for j in 0..16 {
                let tau = Domain::UnitDisk.exit_distance(g.center(i), q.dir(j)).unwrap();
                assert_abs_diff_eq!(u.get(i, j), (-1.3 * tau).exp(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn unit_source_closed_form() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let one = ScalarField::constant(g.clone(), 1.0);
        let src = AngularField::constant(g.clone(), q.clone(), 1.0);
        let u = sweep(&src, &one, &BoundarySource::zero(), 1.0 / 32.0).unwrap();
        for i in 0..g.len() {
            for j in 0..8 {
                let tau = Domain::UnitDisk.exit_distance(g.center(i), q.dir(j)).unwrap();
                let oracle = simpson(|s| (-s).exp(), 0.0, tau, 4000);
                assert_abs_diff_eq!(u.get(i, j), 1.0 - (-tau).exp(), epsilon = 1e-12);
                assert_abs_diff_eq!(u.get(i, j), oracle, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cache_matches_fresh_attenuation() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let sig = ScalarField::from_fn(g.clone(), |p| 1.0 + 0.5 * p[0] - 0.3 * p[1] * p[1]);
        let cache = AttenuationCache::build(&sig, &q, 1.0 / 32.0);
        for i in (0..g.len()).step_by(7) {
            for j in 0..8 {
                let x = g.center(i);
                let tau = Domain::UnitDisk.exit_distance(x, q.dir(j)).unwrap();
                let e = attenuation(x, q.dir(j), tau, &sig, 1.0 / 32.0).unwrap();
                assert!((cache.exit(i, j) - e).abs() <= 1e-12 * e);
            }
        }
    }

    #[test]
    fn no_scattering_is_a_single_sweep() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let a = ScalarField::constant(g.clone(), 1.0);
        let s = ScalarField::constant(g.clone(), 0.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let cfg = TransportConfig::for_grid(&g);
        let sol = solve_linear_rte(&a, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        assert_eq!(sol.iterations, 1);
        let direct = sweep_boundary(&a, &q, &f, cfg.h_ray).unwrap();
        assert_eq!(sol.u.values(), direct.values());
    }

    #[test]
    fn krylov_and_source_iteration_agree() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let a = ScalarField::from_fn(g.clone(), |p| 0.5 + 0.2 * p[0]);
        let s = ScalarField::from_fn(g.clone(), |p| 1.0 + 0.3 * p[1]);
        let f = BoundarySource::isotropic(|x| 1.0 + 0.2 * x[0], 0.8, 1.2).unwrap();
        let cfg = TransportConfig::for_grid(&g).with_tol(1e-12);
        let si = solve_linear_rte(&a, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        let kr = solve_linear_rte(
            &a,
            &s,
            &ScatteringModel::Isotropic,
            &f,
            &q,
            &cfg.clone().with_method(LinearMethod::Krylov),
        )
        .unwrap();
        assert!(si.u.sup_distance(&kr.u) < 1e-9, "{}", si.u.sup_distance(&kr.u));
        assert!(kr.iterations < si.iterations);

        let hg = ScatteringModel::from_phase_function(&q, |c| (0.8 * c).exp()).unwrap();
        let si = solve_linear_rte(&a, &s, &hg, &f, &q, &cfg).unwrap();
        let kr = solve_linear_rte(&a, &s, &hg, &f, &q, &cfg.clone().with_method(LinearMethod::Krylov)).unwrap();
        assert!(si.u.sup_distance(&kr.u) < 1e-9);
    }

    #[test]
    fn warm_start_reaches_the_same_solution() {
        let (g, q) = setup(1.0 / 16.0, 8);
        let a = ScalarField::constant(g.clone(), 0.7);
        let s = ScalarField::constant(g.clone(), 1.5);
        let f = BoundarySource::constant(1.0).unwrap();
        let cfg = TransportConfig::for_grid(&g).with_tol(1e-12);
        let cold = solve_linear_rte(&a, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        let warm = solve_linear_rte_from(&a, &s, &ScatteringModel::Isotropic, &f, &q, &cfg, Some(&cold.u)).unwrap();
        assert!(warm.iterations <= 2);
        assert!(warm.u.sup_distance(&cold.u) < 1e-10);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (g, q) = setup(1.0 / 8.0, 8);
        let a = ScalarField::constant(g.clone(), 0.1);
        let s = ScalarField::constant(g.clone(), 5.0);
        let f = BoundarySource::constant(1.0).unwrap();
        let mut cfg = TransportConfig::for_grid(&g);
        cfg.max_iter = 3;
        let err = solve_linear_rte(&a, &s, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap_err();
        match err {
            Error::Iteration { iterations, trace, .. } => {
                assert_eq!(iterations, 3);
                assert_eq!(trace.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
