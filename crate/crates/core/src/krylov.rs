//! Restarted GMRES for the linear transport fixed point `(I - T) x = b`.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `|r| / |b|` after each inner step.
    pub history: Vec<f64>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `A x = b` with GMRES(`restart`) starting from `x0`. Stops when the relative
/// residual drops below `tol`.
pub fn gmres<F>(
    mut apply: F,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            history: vec![0.0],
        });
    }
    let m = restart.max(1);
    let mut history = Vec::new();
    let mut total = 0;
    let mut w = vec![0.0; n];

    loop {
        apply(&x, &mut w)?;
        let r: Vec<f64> = b.iter().zip(&w).map(|(bi, wi)| bi - wi).collect();
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if history.is_empty() {
            history.push(rel);
        }
        if rel <= tol {
            return Ok(GmresOutcome { x, iterations: total, history });
        }
        if total >= max_iter {
            return Err(Error::Iteration {
                stage: "gmres",
                iterations: total,
                residual: rel,
                trace: history,
            });
        }

        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            apply(&basis[k], &mut w)?;
            let mut v = w.clone();
            for (i, bi) in basis.iter().enumerate() {
                let hik: f64 = v.iter().zip(bi).map(|(a, b)| a * b).sum();
                hess[i][k] = hik;
                v.iter_mut().zip(bi).for_each(|(a, b)| *a -= hik * b);
            }
            let hn = norm2(&v);
            hess[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                hess[i][k] = t;
            }
            let d = hess[k][k].hypot(hess[k + 1][k]);
            cs[k] = hess[k][k] / d;
            sn[k] = hess[k + 1][k] / d;
            hess[k][k] = d;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];

            total += 1;
            k_used = k + 1;
            let rel = g[k + 1].abs() / bnorm;
            history.push(rel);
            if rel <= tol || hn <= 1e-300 || total >= max_iter {
                break;
            }
            basis.push(v.iter().map(|a| a / hn).collect());
        }

        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| hess[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / hess[i][i];
        }
        for (yi, vi) in y.iter().zip(&basis) {
            x.iter_mut().zip(vi).for_each(|(a, b)| *a += yi * b);
        }
    }
}
