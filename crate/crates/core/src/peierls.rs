//! Dense Peierls operator `P f(x) = (1/2pi) int E(x,y) Sigma_t(y) f(y) / |x - y| dy`,
//! its principal spectrum, the constant `mu`, and the integral-equation solve of the
//! isotropic linear problem.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use log::{debug, warn};

use crate::angular::AngularQuadrature;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{direction, Point};
use crate::grid::SpatialGrid;
use crate::io::fmt_f64;
use crate::krylov::gmres;
use crate::par::map_range;
use crate::source::BoundarySource;
use crate::spectral::ScaledCoefficients;
use crate::transport::optical_depth_boxed;

/// Pairs closer than this many cells are integrated over sub-cell points.
const NEAR_CELLS: f64 = 2.5;
const NEAR_SUB: usize = 4;
/// Directions used for the exit attenuation that fixes the row sums.
pub const ROW_SUM_DIRS: usize = 256;

#[derive(Debug, Clone)]
pub struct PeierlsMatrix {
    n: usize,
    data: Vec<f64>,
    sigma_t: Vec<f64>,
    grid: Option<Arc<SpatialGrid>>,
    eps: Option<f64>,
    clamped: usize,
}

impl PeierlsMatrix {
    /// Wrap a row-major matrix of the form `K diag(sigma_t)` with `K` symmetric.
    pub fn from_raw(n: usize, data: Vec<f64>, sigma_t: Vec<f64>) -> Result<Self> {
        if data.len() != n * n || sigma_t.len() != n {
            return Err(Error::Domain(format!("expected a {n}x{n} matrix and {n} weights")));
        }
        if data.iter().any(|v| !(*v >= 0.0)) || sigma_t.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Domain("Peierls entries and weights must be nonnegative".into()));
        }
        Ok(Self {
            n,
            data,
            sigma_t,
            grid: None,
            eps: None,
            clamped: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn grid(&self) -> Option<&Arc<SpatialGrid>> {
        self.grid.as_ref()
    }

    /// Number of diagonal entries that came out negative and were set to zero.
    pub fn clamped_diagonals(&self) -> usize {
        self.clamped
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks_exact(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        map_range(self.n, |i| {
            self.data[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Entries of `Sigma_t^{1/2} P Sigma_t^{-1/2}`, symmetric by construction.
    pub fn symmetrized(&self) -> Vec<f64> {
        let n = self.n;
        let s: Vec<f64> = self.sigma_t.iter().map(|v| v.sqrt()).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let p = self.data[i * n + j];
                out[i * n + j] = if p == 0.0 { 0.0 } else { s[i] * p / s[j] };
            }
        }
        out
    }

    /// `i j value` lines for the nonzero entries.
    pub fn triplets(&self) -> String {
        let mut s = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.data[i * self.n + j];
                if v != 0.0 {
                    let _ = writeln!(s, "{i} {j} {}", fmt_f64(v));
                }
            }
        }
        s
    }
}

/// `E(a, b) / (2 pi |a - b|)` with the attenuation integrated from `a` toward `b`.
fn kernel(grid: &SpatialGrid, sbox: &[f64], a: Point, b: Point, h_ray: f64) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1]];
    let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let v = [d[0] / r, d[1] / r];
    (-optical_depth_boxed(grid, sbox, a, v, r, h_ray)).exp() / (2.0 * PI * r)
}

/// `1 - <E(x, exit)>` over `n_dirs` uniform directions.
fn collision_probability(grid: &SpatialGrid, sbox: &[f64], x: Point, n_dirs: usize, h_ray: f64) -> f64 {
    let mut esc = 0.0;
    for k in 0..n_dirs {
        let v = direction(2.0 * PI * (k as f64 + 0.5) / n_dirs as f64);
        let s = grid.domain().exit_distance_unchecked(x, v);
        esc += (-optical_depth_boxed(grid, sbox, x, v, s, h_ray)).exp();
    }
    1.0 - esc / n_dirs as f64
}

/// Assemble `P` for a total cross-section field.
pub fn assemble_peierls_sigma_t(sigma_t: &ScalarField, h_ray: f64) -> Result<PeierlsMatrix> {
    let grid = sigma_t.grid().clone();
    let n = grid.len();
    if n < 2 {
        return Err(Error::Domain("the Peierls operator needs at least two active cells".into()));
    }
    if sigma_t.min() < 0.0 {
        return Err(Error::Domain(format!("Sigma_t must be nonnegative, min = {}", sigma_t.min())));
    }
    let h = grid.h();
    let h2 = grid.cell_area();
    let sbox = sigma_t.boxed();
    let st = sigma_t.values();
    let near = NEAR_CELLS * h;
    let offsets: Vec<f64> = (0..NEAR_SUB).map(|p| ((p as f64 + 0.5) / NEAR_SUB as f64 - 0.5) * h).collect();

    // symmetric part K_ij = h^2 * mean kernel, upper triangle computed row by row
    let upper: Vec<Vec<f64>> = map_range(n, |i| {
        let xi = grid.center(i);
        (i + 1..n)
            .map(|j| {
                let xj = grid.center(j);
                let r = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
                if r > near {
                    return h2 * kernel(&grid, &sbox, xi, xj, h_ray);
                }
                let mut acc = 0.0;
                for &ax in &offsets {
                    for &ay in &offsets {
                        let a = [xi[0] + ax, xi[1] + ay];
                        for &bx in &offsets {
                            for &by in &offsets {
                                acc += kernel(&grid, &sbox, a, [xj[0] + bx, xj[1] + by], h_ray);
                            }
                        }
                    }
                }
                h2 * acc / (NEAR_SUB as f64).powi(4)
            })
            .collect()
    });
    let mut data = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &kij) in row.iter().enumerate() {
            let j = i + 1 + k;
            data[i * n + j] = kij * st[j];
            data[j * n + i] = kij * st[i];
        }
    }
    // the singular self-interaction is whatever completes the exact row sum
    let totals = map_range(n, |i| collision_probability(&grid, &sbox, grid.center(i), ROW_SUM_DIRS, h_ray));
    let mut clamped = 0;
    for i in 0..n {
        let off: f64 = data[i * n..(i + 1) * n].iter().sum();
        let d = totals[i] - off;
        data[i * n + i] = if d < 0.0 {
            clamped += 1;
            0.0
        } else {
            d
        };
    }
    if clamped > 0 {
        warn!("{clamped} Peierls diagonal entries were negative and set to zero");
    }
    Ok(PeierlsMatrix {
        n,
        data,
        sigma_t: st.to_vec(),
        grid: Some(grid),
        eps: None,
        clamped,
    })
}

/// Assemble `P_eps` for scaled coefficients.
pub fn assemble_peierls(c: &ScaledCoefficients, h_ray: f64) -> Result<PeierlsMatrix> {
    let mut p = assemble_peierls_sigma_t(&c.sigma_t_eps(), h_ray)?;
    p.eps = Some(c.eps());
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct SpectralRadius {
    pub rho: f64,
    /// Positive eigenvector of `P` itself (not the symmetrized form), unit max.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 100_000;

/// Power iteration on `Sigma_t^{1/2} P Sigma_t^{-1/2}` from the all-ones vector.
pub fn spectral_radius(p: &PeierlsMatrix) -> Result<SpectralRadius> {
    let n = p.n;
    let sym = p.symmetrized();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    let mut trace = Vec::new();
    for it in 1..=POWER_MAX_ITER {
        let y: Vec<f64> = map_range(n, |i| sym[i * n..(i + 1) * n].iter().zip(&x).map(|(a, b)| a * b).sum());
        let next: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(SpectralRadius {
                rho: 0.0,
                vector: vec![0.0; n],
                iterations: it,
            });
        }
        x = y.iter().map(|v| v / norm).collect();
        let inc = (next - lambda).abs();
        lambda = next;
        if it % 1000 == 0 {
            trace.push(inc);
        }
        if inc <= POWER_TOL {
            debug!("power iteration converged in {it} steps, rho = {lambda}");
            let mut v: Vec<f64> = x
                .iter()
                .zip(&p.sigma_t)
                .map(|(a, s)| if *s > 0.0 { a / s.sqrt() } else { *a })
                .collect();
            let m = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            v.iter_mut().for_each(|a| *a /= m);
            return Ok(SpectralRadius {
                rho: lambda,
                vector: v,
                iterations: it,
            });
        }
    }
    Err(Error::Iteration {
        stage: "power iteration",
        iterations: POWER_MAX_ITER,
        residual: trace.last().copied().unwrap_or(f64::NAN),
        trace,
    })
}

/// `sup (1 - E(x, x - tau_- v))` over active cells and `quad` directions.
pub fn mu_constant(sigma_t: &ScalarField, quad: &AngularQuadrature, h_ray: f64) -> f64 {
    let grid = sigma_t.grid();
    let sbox = sigma_t.boxed();
    map_range(grid.len(), |i| {
        let x = grid.center(i);
        quad.dirs()
            .iter()
            .map(|&v| {
                let s = grid.domain().exit_distance_unchecked(x, v);
                1.0 - (-optical_depth_boxed(grid, &sbox, x, v, s, h_ray)).exp()
            })
            .fold(0.0f64, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// `mu_eps` for the scaled coefficients.
pub fn mu_constant_scaled(c: &ScaledCoefficients, quad: &AngularQuadrature, h_ray: f64) -> f64 {
    mu_constant(&c.sigma_t_eps(), quad, h_ray)
}

/// Scalar flux of the isotropic linear problem from the integral equation
/// `phi = phi_0 + P (Sigma_s / Sigma_t phi)`, `phi_0 = <E(x, exit) f(exit)>`.
pub fn nystrom_scalar_flux(
    sigma_a: &ScalarField,
    sigma_s: &ScalarField,
    f: &BoundarySource,
    h_ray: f64,
    tol: f64,
) -> Result<ScalarField> {
    let sigma_t = sigma_a.zip_map(sigma_s, |a, s| a + s)?;
    if sigma_t.min() <= 0.0 {
        return Err(Error::Domain("Sigma_t must be positive for the integral equation".into()));
    }
    let p = assemble_peierls_sigma_t(&sigma_t, h_ray)?;
    let grid = sigma_t.grid().clone();
    let sbox = sigma_t.boxed();
    let phi0 = map_range(grid.len(), |i| {
        let x = grid.center(i);
        let mut acc = 0.0;
        for k in 0..ROW_SUM_DIRS {
            let v = direction(2.0 * PI * (k as f64 + 0.5) / ROW_SUM_DIRS as f64);
            let s = grid.domain().exit_distance_unchecked(x, v);
            let xb = [x[0] - s * v[0], x[1] - s * v[1]];
            acc += (-optical_depth_boxed(&grid, &sbox, x, v, s, h_ray)).exp() * f.eval(xb, v);
        }
        acc / ROW_SUM_DIRS as f64
    });
    let c: Vec<f64> = sigma_s
        .values()
        .iter()
        .zip(sigma_t.values())
        .map(|(s, t)| s / t)
        .collect();
    let out = gmres(
        |x, y| {
            let cx: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a * b).collect();
            let px = p.apply(&cx);
            for i in 0..x.len() {
                y[i] = x[i] - px[i];
            }
            Ok(())
        },
        &phi0,
        phi0.clone(),
        tol,
        60,
        2_000,
    )?;
    ScalarField::new(grid, out.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use nalgebra::DMatrix;

    fn disk(h: f64) -> Arc<SpatialGrid> {
        Arc::new(SpatialGrid::new(Domain::UnitDisk, h).unwrap())
    }

    #[test]
    fn no_attenuation_no_interaction() {
        let g = Arc::new(SpatialGrid::new(Domain::rectangle(1.0, 0.5).unwrap(), 0.5).unwrap());
        assert_eq!(g.len(), 2);
        let p = assemble_peierls_sigma_t(&ScalarField::constant(g, 0.0), 0.25).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_closed_forms() {
        let p = PeierlsMatrix::from_raw(1, vec![0.3], vec![2.0]).unwrap();
        assert!((spectral_radius(&p).unwrap().rho - 0.3).abs() < 1e-12);
        let p = PeierlsMatrix::from_raw(2, vec![0.3, 0.2, 0.2, 0.3], vec![1.0, 1.0]).unwrap();
        assert!((spectral_radius(&p).unwrap().rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetrized_form_is_symmetric_and_substochastic() {
        let g = disk(0.25);
        let c = ScaledCoefficients::new(0.5, ScalarField::constant(g.clone(), 1.0), ScalarField::constant(g, 1.0))
            .unwrap();
        let p = assemble_peierls(&c, 0.125).unwrap();
        let s = p.symmetrized();
        let n = p.n();
        for i in 0..n {
            for j in 0..n {
                assert!((s[i * n + j] - s[j * n + i]).abs() <= 1e-12 * s[i * n + j].abs().max(1e-300));
            }
        }
        assert!(p.row_sums().iter().all(|&r| r < 1.0));
        assert_eq!(p.clamped_diagonals(), 0);
    }

    #[test]
    fn power_iteration_matches_dense_eigensolver() {
        let g = disk(1.0 / 6.0);
        let c = ScaledCoefficients::new(0.2, ScalarField::constant(g.clone(), 1.0), ScalarField::constant(g, 1.0))
            .unwrap();
        let p = assemble_peierls(&c, 1.0 / 12.0).unwrap();
        let n = p.n();
        let dense = DMatrix::from_row_slice(n, n, &p.symmetrized());
        let oracle = dense.symmetric_eigen().eigenvalues.iter().fold(f64::MIN, |m, v| m.max(*v));
        let r = spectral_radius(&p).unwrap();
        assert!((r.rho - oracle).abs() < 1e-10, "{} vs {oracle}", r.rho);
        assert!(r.rho < 1.0 && r.vector.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn mu_closed_forms() {
        let g = disk(1.0 / 32.0);
        let quad = AngularQuadrature::uniform(64).unwrap();
        assert_eq!(mu_constant(&ScalarField::constant(g.clone(), 0.0), &quad, 1.0 / 64.0), 0.0);
        let mu = mu_constant(&ScalarField::constant(g, 0.7), &quad, 1.0 / 64.0);
        let exact = 1.0 - (-1.4f64).exp();
        assert!(mu <= exact && exact - mu < 1e-2, "{mu} vs {exact}");
    }

    #[test]
    fn triplets_list_nonzeros() {
        let p = PeierlsMatrix::from_raw(2, vec![0.0, 0.5, 0.25, 0.0], vec![1.0, 1.0]).unwrap();
        let t = p.triplets();
        assert_eq!(t.lines().count(), 2);
        assert!(t.starts_with("0 1 5.0000000000000000e-1"));
    }
}
