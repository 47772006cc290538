//! Multi-photon absorption law `Sigma_a(m) = sum_k sigma_k (T_k |m|)^k`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::SpatialGrid;

/// Symmetric positive semidefinite smoothing operator on the active cells.
#[derive(Debug, Clone)]
pub struct SmoothingKernel {
    n: usize,
    matrix: Arc<Vec<f64>>,
}

impl SmoothingKernel {
    /// Dense row-major `n x n` matrix; rejected unless symmetric and PSD.
    pub fn new(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n || matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("kernel must be a finite {n}x{n} matrix")));
        }
        let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (matrix[i * n + j] - matrix[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::Model(format!("kernel is not symmetric at ({i}, {j})")));
                }
            }
        }
        // PSD up to round-off: Cholesky of the matrix plus a small diagonal shift
        let trace: f64 = (0..n).map(|i| matrix[i * n + i]).sum();
        let jitter = 1e-10 * trace.abs().max(scale) / n as f64 + f64::MIN_POSITIVE;
        let mut m = DMatrix::from_row_slice(n, n, &matrix);
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if m.cholesky().is_none() {
            return Err(Error::Model("kernel is not positive semidefinite".into()));
        }
        Ok(Self {
            n,
            matrix: Arc::new(matrix),
        })
    }

    /// `h^2 exp(-|x - y|^2 / (2 w^2)) / (2 pi w^2)`, a discretized Gaussian blur.
    pub fn gaussian(grid: &SpatialGrid, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Model(format!("kernel width must be positive, got {width}")));
        }
        let n = grid.len();
        let c = grid.cell_area() / (2.0 * std::f64::consts::PI * width * width);
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            let xi = grid.center(i);
            for j in 0..n {
                let xj = grid.center(j);
                let r2 = (xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2);
                matrix[i * n + j] = c * (-r2 / (2.0 * width * width)).exp();
            }
        }
        Self::new(n, matrix)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, m: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(m).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Induced sup-norm `max_i sum_j |T_ij|`.
    pub fn row_sum_norm(&self) -> f64 {
        self.matrix
            .chunks_exact(self.n)
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct MpaModel {
    coeffs: Vec<ScalarField>,
    kernels: Vec<Option<SmoothingKernel>>,
    q: f64,
}

impl MpaModel {
    /// Coefficients `sigma_0, ..., sigma_K` with `sigma_0 > 0` and `sigma_k >= 0`, and
    /// data exponent `q`.
    pub fn new(coeffs: Vec<ScalarField>, q: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Model("σ_{a,0} > 0 is required: no coefficients given".into()));
        }
        for c in &coeffs[1..] {
            coeffs[0].check_same_grid(c)?;
        }
        if coeffs[0].min() <= 0.0 {
            return Err(Error::Model(format!(
                "σ_{{a,0}} > 0 violated: min = {}",
                coeffs[0].min()
            )));
        }
        for (k, c) in coeffs.iter().enumerate().skip(1) {
            if c.min() < 0.0 {
                return Err(Error::Model(format!("σ_{{a,{k}}} >= 0 violated: min = {}", c.min())));
            }
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Model(format!("data exponent must be positive, got {q}")));
        }
        let kernels = vec![None; coeffs.len()];
        Ok(Self { coeffs, kernels, q })
    }

    /// Spatially constant coefficients.
    pub fn constant(grid: &Arc<SpatialGrid>, sigma: &[f64]) -> Result<Self> {
        Self::new(
            sigma.iter().map(|&s| ScalarField::constant(grid.clone(), s)).collect(),
            1.0,
        )
    }

    pub fn with_q(mut self, q: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Model(format!("data exponent must be positive, got {q}")));
        }
        self.q = q;
        Ok(self)
    }

    /// Replace the identity by `T_k` in the `k`-th term.
    pub fn with_kernel(mut self, k: usize, kernel: SmoothingKernel) -> Result<Self> {
        if k >= self.coeffs.len() {
            return Err(Error::Model(format!("no term of degree {k}")));
        }
        if kernel.len() != self.grid().len() {
            return Err(Error::GridMismatch);
        }
        self.kernels[k] = Some(kernel);
        Ok(self)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn coefficient(&self, k: usize) -> &ScalarField {
        &self.coeffs[k]
    }

    pub fn coefficients(&self) -> &[ScalarField] {
        &self.coeffs
    }

    pub fn kernel(&self, k: usize) -> Option<&SmoothingKernel> {
        self.kernels[k].as_ref()
    }

    pub fn has_kernels(&self) -> bool {
        self.kernels.iter().any(Option::is_some)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.coeffs[0].grid()
    }

    /// `inf sigma_0`, the uniform lower bound of the absorption.
    pub fn lower_absorption(&self) -> f64 {
        self.coeffs[0].min()
    }

    /// Growth envelope `g(t) = sum_k sup sigma_k (|T_k| t)^k`, nondecreasing in `t >= 0`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.kernels)
            .enumerate()
            .map(|(k, (c, ker))| {
                let norm = ker.as_ref().map_or(1.0, |t| t.row_sum_norm());
                c.max() * (norm * t).powi(k as i32)
            })
            .sum()
    }

    /// Same law with every coefficient multiplied by `eps`.
    pub fn scaled(&self, eps: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.map(|v| eps * v)).collect(),
            kernels: self.kernels.clone(),
            q: self.q,
        }
    }

    /// Pointwise `sum_k sigma_k (T_k |m|)^k`.
    pub fn eval_sigma_a(&self, m: &ScalarField) -> Result<ScalarField> {
        self.coeffs[0].check_same_grid(m)?;
        let abs: Vec<f64> = m.values().iter().map(|v| v.abs()).collect();
        let mut out = self.coeffs[0].values().to_vec();
        if !self.has_kernels() {
            // Horner from the top degree down
            let kmax = self.degree();
            if kmax > 0 {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = self.coeffs[kmax].values()[i];
                    for k in (1..kmax).rev() {
                        acc = acc * abs[i] + self.coeffs[k].values()[i];
                    }
                    *o += acc * abs[i];
                }
            }
        } else {
            for k in 1..=self.degree() {
                let arg = match &self.kernels[k] {
                    Some(t) => t.apply(&abs),
                    None => abs.clone(),
                };
                for (o, (c, a)) in out.iter_mut().zip(self.coeffs[k].values().iter().zip(&arg)) {
                    *o += c * a.powi(k as i32);
                }
            }
        }
        ScalarField::new(m.grid().clone(), out)
    }

    /// Quadrature of `int Sigma_a'(m)[f] f dx` with
    /// `Sigma_a'(m)[f] = sum_k k sigma_k (T_k m)^{k-1} T_k f`.
    pub fn frechet_positivity_check(&self, m: &ScalarField, f: &ScalarField) -> Result<f64> {
        self.coeffs[0].check_same_grid(m)?;
        m.check_same_grid(f)?;
        let mut deriv = vec![0.0; m.len()];
        for k in 1..=self.degree() {
            let (tm, tf) = match &self.kernels[k] {
                Some(t) => (t.apply(m.values()), t.apply(f.values())),
                None => (m.values().to_vec(), f.values().to_vec()),
            };
            for (i, d) in deriv.iter_mut().enumerate() {
                *d += k as f64 * self.coeffs[k].values()[i] * tm[i].powi(k as i32 - 1) * tf[i];
            }
        }
        Ok(deriv.iter().zip(f.values()).map(|(d, v)| d * v).sum::<f64>() * m.grid().cell_area())
    }
}
