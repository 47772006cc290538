//! Scattering operator `K u(x, v) = int p(v, v') u(x, v') dv'`.

use crate::angular::AngularQuadrature;
use crate::error::{Error, Result};
use crate::field::{AngularField, ScalarField};

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ScatteringModel {
    /// `K u = <u>`.
    Isotropic,
    /// Spatially uniform phase function tabulated on the quadrature directions,
    /// `kernel[j * n + k] = p(v_j, v_k)`.
    Tabulated { n: usize, kernel: Vec<f64> },
}

impl ScatteringModel {
    /// Validates nonnegativity and unit row/column sums under the quadrature weights.
    pub fn tabulated(quad: &AngularQuadrature, kernel: Vec<f64>) -> Result<Self> {
        let n = quad.len();
        if kernel.len() != n * n {
            return Err(Error::Model(format!(
                "phase table has {} entries, expected {}",
                kernel.len(),
                n * n
            )));
        }
        if kernel.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Model("phase function must be nonnegative and finite".into()));
        }
        let w = quad.weight();
        for j in 0..n {
            let row: f64 = (0..n).map(|k| w * kernel[j * n + k]).sum();
            let col: f64 = (0..n).map(|k| w * kernel[k * n + j]).sum();
            if (row - 1.0).abs() > NORMALIZATION_TOL || (col - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Model(format!(
                    "phase function not normalized at direction {j}: row {row}, column {col}"
                )));
            }
        }
        Ok(ScatteringModel::Tabulated { n, kernel })
    }

    /// Phase function depending only on the cosine between directions, normalized per
    /// row. The circulant structure makes rows and columns sum to one together.
    pub fn from_phase_function(quad: &AngularQuadrature, p: impl Fn(f64) -> f64) -> Result<Self> {
        let n = quad.len();
        let mut kernel = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let c = quad.dir(j)[0] * quad.dir(k)[0] + quad.dir(j)[1] * quad.dir(k)[1];
                kernel[j * n + k] = p(c);
            }
        }
        let w = quad.weight();
        for j in 0..n {
            let s: f64 = (0..n).map(|k| w * kernel[j * n + k]).sum();
            if !(s > 0.0) {
                return Err(Error::Model("phase function integrates to zero".into()));
            }
            for k in 0..n {
                kernel[j * n + k] /= s;
            }
        }
        Self::tabulated(quad, kernel)
    }

    /// Sinkhorn balancing of an arbitrary positive table into a normalized phase function.
    pub fn sinkhorn(quad: &AngularQuadrature, raw: &[f64]) -> Result<Self> {
        let n = quad.len();
        if raw.len() != n * n || raw.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Model("Sinkhorn balancing needs a strictly positive table".into()));
        }
        let w = quad.weight();
        let mut k = raw.to_vec();
        for _ in 0..10_000 {
            for j in 0..n {
                let s: f64 = (0..n).map(|c| w * k[j * n + c]).sum();
                for c in 0..n {
                    k[j * n + c] /= s;
                }
            }
            let mut worst: f64 = 0.0;
            for c in 0..n {
                let s: f64 = (0..n).map(|j| w * k[j * n + c]).sum();
                worst = worst.max((s - 1.0).abs());
                for j in 0..n {
                    k[j * n + c] /= s;
                }
            }
            if worst < 1e-15 {
                break;
            }
        }
        Self::tabulated(quad, k)
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self, ScatteringModel::Isotropic)
    }

    /// Apply `K` at a single cell: `out[j] = sum_k w_k p(v_j, v_k) u[k]`.
    pub fn apply_cell(&self, w: f64, u: &[f64], out: &mut [f64]) {
        match self {
            ScatteringModel::Isotropic => {
                let avg = u.iter().sum::<f64>() * w;
                out.iter_mut().for_each(|o| *o = avg);
            }
            ScatteringModel::Tabulated { n, kernel } => {
                for j in 0..*n {
                    let row = &kernel[j * n..(j + 1) * n];
                    out[j] = w * row.iter().zip(u).map(|(p, x)| p * x).sum::<f64>();
                }
            }
        }
    }

    pub fn apply(&self, u: &AngularField) -> Result<AngularField> {
        let nv = u.n_dirs();
        if let ScatteringModel::Tabulated { n, .. } = self {
            if *n != nv {
                return Err(Error::Model(format!(
                    "phase table built for {n} directions applied to {nv}"
                )));
            }
        }
        let w = u.quadrature().weight();
        let mut out = u.clone();
        for (src, dst) in u.values().chunks_exact(nv).zip(out.values_mut().chunks_exact_mut(nv)) {
            self.apply_cell(w, src, dst);
        }
        Ok(out)
    }
}

/// Free-function form of [`ScatteringModel::apply`].
pub fn apply_scattering(k: &ScatteringModel, u: &AngularField) -> Result<AngularField> {
    k.apply(u)
}

/// `sum_j w phi_j^2 / u_j - sum_j w (K phi)_j^2 / (K u)_j` for one cell; nonnegative for
/// every normalized kernel and `u > 0`.
pub fn am_gm_gap(k: &ScatteringModel, w: f64, u: &[f64], phi: &[f64]) -> f64 {
    let n = u.len();
    let mut ku = vec![0.0; n];
    let mut kphi = vec![0.0; n];
    k.apply_cell(w, u, &mut ku);
    k.apply_cell(w, phi, &mut kphi);
    let rhs: f64 = phi.iter().zip(u).map(|(p, x)| w * p * p / x).sum();
    let lhs: f64 = kphi.iter().zip(&ku).map(|(p, x)| w * p * p / x).sum();
    rhs - lhs
}

/// Cellwise `sigma_s * K u`, the scattering source fed to the sweep.
pub fn scattering_source(
    k: &ScatteringModel,
    sigma_s: &ScalarField,
    u: &AngularField,
) -> Result<AngularField> {
    let mut q = k.apply(u)?;
    let nv = q.n_dirs();
    for (chunk, &s) in q.values_mut().chunks_exact_mut(nv).zip(sigma_s.values()) {
        chunk.iter_mut().for_each(|x| *x *= s);
    }
    Ok(q)
}
