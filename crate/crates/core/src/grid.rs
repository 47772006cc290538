//! Uniform Cartesian grid masked to the domain.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};

const INACTIVE: u32 = u32::MAX;

/// Cell-centred Cartesian grid over the domain's bounding box (padded by one cell). Only cells whose
/// centres lie strictly inside the domain carry unknowns ("active" cells).
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    domain: Domain,
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
    centers: Vec<Point>,
    cells: Vec<(usize, usize)>,
    index: Vec<u32>,
    fill: Vec<u32>,
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.h == other.h
            && self.nx == other.nx
            && self.ny == other.ny
            && self.origin == other.origin
    }
}

/// Bilinear interpolation stencil: lower-left box index and fractional offsets.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    base: usize,
    tx: f64,
    ty: f64,
}

impl SpatialGrid {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("cell size must be positive, got {h}")));
        }
        let (lo, hi) = domain.bounding_box();
        let width = hi[0] - lo[0];
        let height = hi[1] - lo[1];
        // one padding cell on each side keeps bilinear stencils of points in the
        // closed domain away from the box edge
        let nx = ((width / h) - 1e-9).ceil().max(1.0) as usize + 2;
        let ny = ((height / h) - 1e-9).ceil().max(1.0) as usize + 2;
        let origin = [
            0.5 * (lo[0] + hi[0]) - 0.5 * nx as f64 * h,
            0.5 * (lo[1] + hi[1]) - 0.5 * ny as f64 * h,
        ];

        let mut centers = Vec::new();
        let mut cells = Vec::new();
        let mut index = vec![INACTIVE; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let c = [
                    origin[0] + (ix as f64 + 0.5) * h,
                    origin[1] + (iy as f64 + 0.5) * h,
                ];
                if domain.contains(c) {
                    index[iy * nx + ix] = centers.len() as u32;
                    centers.push(c);
                    cells.push((ix, iy));
                }
            }
        }
        if centers.is_empty() {
            return Err(Error::Domain(format!("no active cells at h = {h}")));
        }

        // nearest-active fill used for extrapolation outside the active set
        let mut fill = index.clone();
        let mut queue: VecDeque<usize> = (0..nx * ny).filter(|&k| index[k] != INACTIVE).collect();
        while let Some(k) = queue.pop_front() {
            let (ix, iy) = ((k % nx) as isize, (k / nx) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                        continue;
                    }
                    let j = jy as usize * nx + jx as usize;
                    if fill[j] == INACTIVE {
                        fill[j] = fill[k];
                        queue.push_back(j);
                    }
                }
            }
        }

        Ok(Self {
            domain,
            origin,
            h,
            nx,
            ny,
            centers,
            cells,
            index,
            fill,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, i: usize) -> Point {
        self.centers[i]
    }

    /// Box coordinates `(ix, iy)` of active cell `i`.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        self.cells[i]
    }

    pub fn active_index(&self, ix: isize, iy: isize) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.nx as isize || iy >= self.ny as isize {
            return None;
        }
        match self.index[iy as usize * self.nx + ix as usize] {
            INACTIVE => None,
            k => Some(k as usize),
        }
    }

    pub fn box_center(&self, ix: usize, iy: usize) -> Point {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.h,
            self.origin[1] + (iy as f64 + 0.5) * self.h,
        ]
    }

    pub fn active_area(&self) -> f64 {
        self.len() as f64 * self.cell_area()
    }

    pub fn distance_to_boundary(&self, i: usize) -> f64 {
        self.domain.distance_to_boundary(self.centers[i])
    }

    /// Index of the active cell whose centre is closest to `p`.
    pub fn nearest_cell(&self, p: Point) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Spread active-cell values over the whole bounding box, copying the nearest active
    /// value into inactive cells.
    pub fn to_box(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.len());
        self.fill.iter().map(|&k| values[k as usize]).collect()
    }

    /// Box index of the lower-left corner of a stencil.
    pub fn box_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn stencil(&self, p: Point) -> Stencil {
        let fx = (p[0] - self.origin[0]) / self.h - 0.5;
        let fy = (p[1] - self.origin[1]) / self.h - 0.5;
        let ix = (fx.floor() as isize).clamp(0, self.nx as isize - 2) as usize;
        let iy = (fy.floor() as isize).clamp(0, self.ny as isize - 2) as usize;
        Stencil {
            base: iy * self.nx + ix,
            tx: (fx - ix as f64).clamp(0.0, 1.0),
            ty: (fy - iy as f64).clamp(0.0, 1.0),
        }
    }

    #[inline]
    pub fn apply(&self, s: Stencil, boxed: &[f64]) -> f64 {
        self.bilinear(boxed, s.base, s.tx, s.ty)
    }

    /// Bilinear combination of the four box values with lower-left corner `base`.
    #[inline(always)]
    pub fn bilinear(&self, boxed: &[f64], base: usize, tx: f64, ty: f64) -> f64 {
        let a00 = boxed[base];
        let a10 = boxed[base + 1];
        let a01 = boxed[base + self.nx];
        let a11 = boxed[base + self.nx + 1];
        let bottom = a00 + tx * (a10 - a00);
        let top = a01 + tx * (a11 - a01);
        bottom + ty * (top - bottom)
    }

    /// Bilinear interpolation of a boxed field (see [`SpatialGrid::to_box`]).
    #[inline]
    pub fn interpolate(&self, boxed: &[f64], p: Point) -> f64 {
        self.apply(self.stencil(p), boxed)
    }
}
