//! Five-point finite differences for `-div(D grad u)` on the masked grid, with
//! Shortley-Weller treatment of cut cells: Dirichlet values are imposed where grid
//! lines meet the boundary.

use std::sync::Arc;

use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::Point;
use crate::grid::SpatialGrid;

#[derive(Debug, Clone)]
struct Row {
    diag: f64,
    nbrs: Vec<(usize, f64)>,
    /// Boundary intersection points and the weight moved to the right-hand side.
    bdry: Vec<(Point, f64)>,
}

#[derive(Debug, Clone)]
pub struct FdOperator {
    grid: Arc<SpatialGrid>,
    rows: Vec<Row>,
    bw: usize,
}

impl FdOperator {
    /// Discretize `-div(coef grad .)` with homogeneous treatment of the boundary terms
    /// (they are returned separately by [`FdOperator::boundary_rhs`]).
    pub fn new(coef: &ScalarField) -> Result<Self> {
        if coef.min() <= 0.0 {
            return Err(Error::Domain(format!(
                "diffusion coefficient must be positive, min = {}",
                coef.min()
            )));
        }
        let grid = coef.grid().clone();
        let h = grid.h();
        let d = coef.values();
        let mut rows = Vec::with_capacity(grid.len());
        let mut bw = 0;
        for i in 0..grid.len() {
            let (ix, iy) = grid.cell(i);
            let x = grid.center(i);
            let mut row = Row {
                diag: 0.0,
                nbrs: Vec::with_capacity(4),
                bdry: Vec::new(),
            };
            for axis in 0..2 {
                // (neighbour index or boundary point, arm length, face coefficient)
                let mut arms = Vec::with_capacity(2);
                for sign in [1isize, -1] {
                    let (dx, dy) = if axis == 0 { (sign, 0) } else { (0, sign) };
                    match grid.active_index(ix as isize + dx, iy as isize + dy) {
                        Some(j) => {
                            bw = bw.max(i.abs_diff(j));
                            arms.push((Ok(j), h, 0.5 * (d[i] + d[j])));
                        }
                        None => {
                            let e = [dx as f64, dy as f64];
                            let dist = grid.domain().exit_distance_unchecked(x, [-e[0], -e[1]]);
                            let arm = dist.clamp(1e-3 * h, h);
                            arms.push((Err([x[0] + arm * e[0], x[1] + arm * e[1]]), arm, d[i]));
                        }
                    }
                }
                let factor = 2.0 / (arms[0].1 + arms[1].1);
                for (target, arm, dface) in arms {
                    let c = factor * dface / arm;
                    row.diag += c;
                    match target {
                        Ok(j) => row.nbrs.push((j, -c)),
                        Err(p) => row.bdry.push((p, c)),
                    }
                }
            }
            rows.push(row);
        }
        Ok(Self { grid, rows, bw })
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `A u` with zero boundary values.
    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.diag * u[i] + r.nbrs.iter().map(|&(j, c)| c * u[j]).sum::<f64>())
            .collect()
    }

    /// Contribution of Dirichlet data `g` to the right-hand side.
    pub fn boundary_rhs(&self, g: impl Fn(Point) -> f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.bdry.iter().map(|&(p, c)| c * g(p)).sum())
            .collect()
    }

    /// Banded copy of `A + diag(extra)`.
    pub fn banded(&self, extra: Option<&[f64]>) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(self.len(), self.bw);
        for (i, r) in self.rows.iter().enumerate() {
            m.add(i, i, r.diag + extra.map_or(0.0, |e| e[i]));
            for &(j, c) in &r.nbrs {
                m.add(i, j, c);
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.diag).collect()
    }

    /// Whether cell `i` touches the boundary through a cut arm.
    pub fn is_cut(&self, i: usize) -> bool {
        !self.rows[i].bdry.is_empty()
    }
}
