//! wasm-bindgen front end for the static page in `www/`.

use std::sync::Arc;

use semirte::peierls::{assemble_peierls, spectral_radius};
use semirte::scan::loglog_slope;
use semirte::spectral::{dirichlet_eigenpair, ScaledCoefficients};
use semirte::{
    fixed_point_solve, AngularQuadrature, BoundarySource, Domain, FixedPointConfig, MpaModel, ScalarField,
    ScatteringModel, SpatialGrid, TransportConfig,
};
use wasm_bindgen::prelude::*;

/// Cell values on the bounding box, row by row from the bottom, NaN outside the disk.
#[wasm_bindgen]
pub struct Image {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    min: f64,
    max: f64,
}

#[wasm_bindgen]
impl Image {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

impl Image {
    fn from_field(f: &ScalarField) -> Self {
        let g = f.grid();
        let mut values = vec![f64::NAN; g.nx() * g.ny()];
        for (i, v) in f.values().iter().enumerate() {
            let (ix, iy) = g.cell(i);
            values[iy * g.nx() + ix] = *v;
        }
        Image {
            nx: g.nx(),
            ny: g.ny(),
            values,
            min: f.min(),
            max: f.max(),
        }
    }
}

fn disk(h: f64) -> Result<Arc<SpatialGrid>, JsError> {
    Ok(Arc::new(SpatialGrid::new(Domain::UnitDisk, h)?))
}

/// `<u>` for the law `sigma0 + sigma1 |<u>|` with constant scattering and inflow.
#[wasm_bindgen]
pub fn forward_mean(
    h: f64,
    directions: usize,
    sigma0: f64,
    sigma1: f64,
    sigma_s: f64,
    inflow: f64,
) -> Result<Image, JsError> {
    let g = disk(h)?;
    let q = Arc::new(AngularQuadrature::uniform(directions)?);
    let model = MpaModel::constant(&g, &[sigma0, sigma1])?;
    let ss = ScalarField::constant(g.clone(), sigma_s);
    let f = BoundarySource::constant(inflow)?;
    let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g).with_tol(1e-8)).with_tol(1e-6);
    let sol = fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg)?;
    Ok(Image::from_field(&sol.mean))
}

/// `[eps_0, 1 - rho_0, eps_1, 1 - rho_1, ..., slope]` for `Sigma_a = Sigma_s = 1`.
#[wasm_bindgen]
pub fn spectral_scan(h: f64, eps: Vec<f64>) -> Result<Vec<f64>, JsError> {
    let g = disk(h)?;
    let one = ScalarField::constant(g.clone(), 1.0);
    let base = ScaledCoefficients::new(1.0, one.clone(), one)?;
    let mut out = Vec::new();
    let mut pts = Vec::new();
    for e in eps {
        let p = assemble_peierls(&base.at(e)?, 0.5 * h)?;
        let gap = 1.0 - spectral_radius(&p)?.rho;
        out.extend([e, gap]);
        pts.push((e, gap));
    }
    out.push(loglog_slope(&pts));
    Ok(out)
}

/// Principal Dirichlet eigenfunction of `-div(Sigma_{t,eps}^{-1} grad)` with
/// `Sigma_a = Sigma_s = 1`.
#[wasm_bindgen]
pub fn eigenfunction(h: f64, eps: f64) -> Result<Image, JsError> {
    let g = disk(h)?;
    let one = ScalarField::constant(g.clone(), 1.0);
    let c = ScaledCoefficients::new(eps, one.clone(), one)?;
    Ok(Image::from_field(&dirichlet_eigenpair(&c)?.vector))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_places_cells_in_the_box() {
        let img = eigenfunction(0.25, 0.5).unwrap();
        assert_eq!(img.values.len(), img.nx * img.ny);
        let finite = img.values.iter().filter(|v| v.is_finite()).count();
        assert_eq!(finite, disk(0.25).unwrap().len());
        assert!(img.min >= 0.0 && img.max > 0.0);
    }

    #[test]
    fn scan_returns_pairs_and_slope() {
        let out = spectral_scan(0.25, vec![0.5, 0.25]).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out[1] > out[3] && out[4].is_finite());
    }

    #[test]
    fn forward_mean_is_bounded_by_the_inflow() {
        let img = forward_mean(0.25, 8, 1.0, 0.5, 1.0, 1.0).unwrap();
        assert!(img.max <= 1.0 && img.min > 0.0);
    }
}
