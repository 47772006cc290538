//! Plain-text serialization of fields and field descriptions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AngularField, ScalarField};
use crate::grid::SpatialGrid;
use crate::mpa::{MpaModel, SmoothingKernel};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn scalar_csv(field: &ScalarField) -> String {
    let mut s = String::from("x,y,value\n");
    for (c, v) in field.grid().centers().iter().zip(field.values()) {
        let _ = writeln!(s, "{},{},{}", fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(*v));
    }
    s
}

pub fn angular_csv(field: &AngularField) -> String {
    let mut s = String::from("x,y,theta,value\n");
    let quad = field.quadrature();
    for (i, c) in field.grid().centers().iter().enumerate() {
        for j in 0..quad.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(quad.theta(j)),
                fmt_f64(field.get(i, j))
            );
        }
    }
    s
}

pub fn write_scalar_csv(path: &Path, field: &ScalarField) -> Result<()> {
    fs::write(path, scalar_csv(field)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_angular_csv(path: &Path, field: &AngularField) -> Result<()> {
    fs::write(path, angular_csv(field)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Parse an `x,y,value` table whose rows follow the grid's active-cell order.
pub fn parse_scalar_csv(text: &str, grid: &Arc<SpatialGrid>) -> Result<ScalarField> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "x,y,value" => {}
        other => {
            return Err(Error::Data(format!(
                "expected header `x,y,value`, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let tol = 0.25 * grid.h();
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let cols: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("row {}: {e}", row + 2)))?;
        if cols.len() != 3 {
            return Err(Error::Data(format!("row {}: expected 3 columns", row + 2)));
        }
        if row >= grid.len() {
            return Err(Error::Data(format!("more rows than the {} active cells", grid.len())));
        }
        let c = grid.center(row);
        if (c[0] - cols[0]).abs() > tol || (c[1] - cols[1]).abs() > tol {
            return Err(Error::Data(format!(
                "row {} at ({}, {}) does not match cell centre ({}, {})",
                row + 2,
                cols[0],
                cols[1],
                c[0],
                c[1]
            )));
        }
        values.push(cols[2]);
    }
    ScalarField::new(grid.clone(), values)
}

pub fn read_scalar_csv(path: &Path, grid: &Arc<SpatialGrid>) -> Result<ScalarField> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_scalar_csv(&text, grid)
}

/// Description of a scalar field: an inline constant or a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    Profile(FieldProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldProfile {
    /// `x,y,value` table, path relative to the spec file.
    Csv { path: PathBuf },
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`.
    Bump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// `base + gradient . x`.
    Linear { base: f64, gradient: [f64; 2] },
    /// `inside` for `|x| <= radius`, `outside` beyond.
    Radial { inside: f64, outside: f64, radius: f64 },
}

impl FieldSpec {
    pub fn realize(&self, grid: &Arc<SpatialGrid>, base_dir: &Path) -> Result<ScalarField> {
        match self {
            FieldSpec::Constant(c) => {
                if !c.is_finite() {
                    return Err(Error::Data("non-finite constant field".into()));
                }
                Ok(ScalarField::constant(grid.clone(), *c))
            }
            FieldSpec::Profile(FieldProfile::Csv { path }) => read_scalar_csv(&base_dir.join(path), grid),
            FieldSpec::Profile(FieldProfile::Bump {
                base,
                amplitude,
                center,
                width,
            }) => {
                if !(*width > 0.0) {
                    return Err(Error::Data(format!("bump width must be positive, got {width}")));
                }
                let (b, a, c, w) = (*base, *amplitude, *center, *width);
                Ok(ScalarField::from_fn(grid.clone(), move |p| {
                    let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                    b + a * (-r2 / (2.0 * w * w)).exp()
                }))
            }
            FieldSpec::Profile(FieldProfile::Linear { base, gradient }) => {
                let (b, g) = (*base, *gradient);
                Ok(ScalarField::from_fn(grid.clone(), move |p| b + g[0] * p[0] + g[1] * p[1]))
            }
            FieldSpec::Profile(FieldProfile::Radial { inside, outside, radius }) => {
                let (a, b, r) = (*inside, *outside, *radius);
                Ok(ScalarField::from_fn(grid.clone(), move |p| if p[0].hypot(p[1]) <= r { a } else { b }))
            }
        }
    }

    /// Bounds known without a grid (`None` for tabulated data).
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            FieldSpec::Constant(c) => Some((*c, *c)),
            FieldSpec::Profile(FieldProfile::Bump { base, amplitude, .. }) => {
                Some((base.min(base + amplitude), base.max(base + amplitude)))
            }
            FieldSpec::Profile(FieldProfile::Radial { inside, outside, .. }) => {
                Some((inside.min(*outside), inside.max(*outside)))
            }
            _ => None,
        }
    }
}

/// Serialized form of an absorption law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpaDocument {
    pub degree: usize,
    pub coefficients: Vec<FieldSpec>,
    #[serde(default = "one")]
    pub q: f64,
    /// Gaussian smoothing width per term (`None` for the identity).
    #[serde(default)]
    pub kernel_widths: Vec<Option<f64>>,
}

fn one() -> f64 {
    1.0
}

impl MpaDocument {
    pub fn check(&self) -> Result<()> {
        if self.coefficients.is_empty() {
            return Err(Error::Model("σ_{a,0} > 0 is required but no coefficient was given".into()));
        }
        if self.coefficients.len() != self.degree + 1 {
            return Err(Error::Model(format!(
                "degree {} needs {} coefficients, found {}",
                self.degree,
                self.degree + 1,
                self.coefficients.len()
            )));
        }
        if let Some((lo, _)) = self.coefficients[0].bounds() {
            if lo <= 0.0 {
                return Err(Error::Model(format!("σ_{{a,0}} > 0 violated: inf = {lo}")));
            }
        }
        for (k, c) in self.coefficients.iter().enumerate().skip(1) {
            if let Some((lo, _)) = c.bounds() {
                if lo < 0.0 {
                    return Err(Error::Model(format!("σ_{{a,{k}}} >= 0 violated: inf = {lo}")));
                }
            }
        }
        if !(self.q > 0.0) {
            return Err(Error::Model(format!("data exponent must be positive, got {}", self.q)));
        }
        if self.kernel_widths.len() > self.degree + 1 {
            return Err(Error::Model("more kernel widths than terms".into()));
        }
        Ok(())
    }

    pub fn build(&self, grid: &Arc<SpatialGrid>, base_dir: &Path) -> Result<MpaModel> {
        self.check()?;
        let coeffs = self
            .coefficients
            .iter()
            .map(|c| c.realize(grid, base_dir))
            .collect::<Result<Vec<_>>>()?;
        let mut model = MpaModel::new(coeffs, 1.0)?.with_q(self.q)?;
        for (k, w) in self.kernel_widths.iter().enumerate() {
            if let Some(w) = w {
                model = model.with_kernel(k, SmoothingKernel::gaussian(grid, *w)?)?;
            }
        }
        Ok(model)
    }
}
