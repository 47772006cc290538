//! Convex two-dimensional domains.
//!
//! Every query here is analytic: exit distances along a direction, distance to the
//! boundary and outward normals. The transport sweep and the Peierls assembly rely on
//! exact exit points so that boundary data is sampled on the true boundary rather than
//! on the nearest grid cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Domain {
    /// Disk of radius one centred at the origin.
    UnitDisk,
    /// Axis-aligned rectangle `[0, width] x [0, height]`.
    Rectangle { width: f64, height: f64 },
}

impl Default for Domain {
    fn default() -> Self {
        Domain::UnitDisk
    }
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn direction(theta: f64) -> Point {
    [theta.cos(), theta.sin()]
}

impl Domain {
    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::Domain(format!(
                "rectangle sides must be positive, got {width} x {height}"
            )));
        }
        Ok(Domain::Rectangle { width, height })
    }

    /// Lower-left and upper-right corners of the bounding box.
    pub fn bounding_box(&self) -> (Point, Point) {
        match *self {
            Domain::UnitDisk => ([-1.0, -1.0], [1.0, 1.0]),
            Domain::Rectangle { width, height } => ([0.0, 0.0], [width, height]),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::UnitDisk => 2.0,
            Domain::Rectangle { width, height } => width.hypot(height),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::UnitDisk => std::f64::consts::PI,
            Domain::Rectangle { width, height } => width * height,
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, x: Point) -> bool {
        match *self {
            Domain::UnitDisk => dot(x, x) < 1.0,
            Domain::Rectangle { width, height } => {
                x[0] > 0.0 && x[0] < width && x[1] > 0.0 && x[1] < height
            }
        }
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        match *self {
            Domain::UnitDisk => (1.0 - norm(x)).max(0.0),
            Domain::Rectangle { width, height } => x[0]
                .min(width - x[0])
                .min(x[1])
                .min(height - x[1])
                .max(0.0),
        }
    }

    /// Distance `tau_-` travelled backwards from `x` along `-v` before leaving the domain,
    /// so that `x - tau_- v` lies on the boundary.
    pub fn exit_distance(&self, x: Point, v: Point) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::Domain(format!(
                "point ({}, {}) is not inside the domain",
                x[0], x[1]
            )));
        }
        Ok(self.exit_distance_unchecked(x, v))
    }

    /// Same as [`Domain::exit_distance`] without the membership check; points on the
    /// boundary return the (possibly zero) backward chord.
    pub fn exit_distance_unchecked(&self, x: Point, v: Point) -> f64 {
        match *self {
            Domain::UnitDisk => {
                // |x - s v|^2 = 1, largest root
                let b = dot(x, v);
                let c = dot(x, x) - 1.0;
                let disc = (b * b - c).max(0.0);
                (b + disc.sqrt()).max(0.0)
            }
            Domain::Rectangle { width, height } => {
                let mut s = f64::INFINITY;
                let upper = [width, height];
                for k in 0..2 {
                    // moving along -v
                    let w = -v[k];
                    if w > 0.0 {
                        s = s.min((upper[k] - x[k]) / w);
                    } else if w < 0.0 {
                        s = s.min(-x[k] / w);
                    }
                }
                s.max(0.0)
            }
        }
    }

    /// Forward distance `tau_+` to the boundary along `+v`.
    pub fn forward_distance(&self, x: Point, v: Point) -> Result<f64> {
        self.exit_distance(x, [-v[0], -v[1]])
    }

    /// Full chord length through `x` along `v`.
    pub fn chord_length(&self, x: Point, v: Point) -> Result<f64> {
        Ok(self.exit_distance(x, v)? + self.forward_distance(x, v)?)
    }

    /// Outward unit normal at (or radially nearest to) a boundary point.
    pub fn outward_normal(&self, x: Point) -> Point {
        match *self {
            Domain::UnitDisk => {
                let r = norm(x);
                if r == 0.0 {
                    [1.0, 0.0]
                } else {
                    [x[0] / r, x[1] / r]
                }
            }
            Domain::Rectangle { width, height } => {
                let d = [x[0], width - x[0], x[1], height - x[1]];
                let normals = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];
                let (k, _) = d
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (k, &dk)| {
                        if dk < acc.1 {
                            (k, dk)
                        } else {
                            acc
                        }
                    });
                normals[k]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Bisection on the boundary crossing, independent of the quadratic formula.
    fn exit_by_bisection(dom: &Domain, x: Point, v: Point) -> f64 {
        let (mut lo, mut hi) = (0.0, 4.0 * dom.diameter());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dom.contains([x[0] - mid * v[0], x[1] - mid * v[1]]) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn origin_exit_distance_is_radius() {
        let dom = Domain::UnitDisk;
        for k in 0..16 {
            let v = direction(k as f64 * 0.4);
            assert_relative_eq!(dom.exit_distance([0.0, 0.0], v).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn collinear_and_perpendicular_chords() {
        let dom = Domain::UnitDisk;
        assert_relative_eq!(dom.exit_distance([0.5, 0.0], [1.0, 0.0]).unwrap(), 1.5, epsilon = 1e-15);
        let tau = dom.exit_distance([0.5, 0.0], [0.0, 1.0]).unwrap();
        assert_relative_eq!(tau, 0.75f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(tau, 0.8660254037844386, epsilon = 1e-12);
        let oracle = exit_by_bisection(&dom, [0.5, 0.0], [0.0, 1.0]);
        assert_relative_eq!(tau, oracle, epsilon = 1e-12);
    }

    #[test]
    fn outside_point_is_rejected() {
        let dom = Domain::UnitDisk;
        assert!(dom.exit_distance([1.2, 0.0], [1.0, 0.0]).is_err());
        assert!(dom.exit_distance([1.0, 0.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn rectangle_exit_matches_bisection() {
        let dom = Domain::rectangle(3.0, 2.0).unwrap();
        let x = [1.1, 0.7];
        for k in 0..24 {
            let v = direction(0.3 + k as f64 * std::f64::consts::PI / 12.0);
            let tau = dom.exit_distance(x, v).unwrap();
            assert_relative_eq!(tau, exit_by_bisection(&dom, x, v), epsilon = 1e-10);
        }
    }

    #[test]
    fn chord_is_sum_of_both_exits() {
        let dom = Domain::UnitDisk;
        let x = [0.3, -0.2];
        let v = direction(1.1);
        // chord through x along v: 2 sqrt(1 - d^2) with d the distance of the line to the origin
        let d = (x[0] * v[1] - x[1] * v[0]).abs();
        assert_relative_eq!(dom.chord_length(x, v).unwrap(), 2.0 * (1.0 - d * d).sqrt(), epsilon = 1e-14);
    }
}
