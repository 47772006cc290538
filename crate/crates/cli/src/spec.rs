//! Experiment description read from JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use semirte::io::{FieldSpec, MpaDocument};
use semirte::scan::{check_eps_list, ScanOptions};
use semirte::transport::LinearMethod;
use semirte::{AngularQuadrature, BoundarySource, Domain, SpatialGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Forward,
    Diffusion,
    Invert,
    SpectralScan,
    StabilityScan,
    DiffusionLimitScan,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Forward => "forward",
            Kind::Diffusion => "diffusion",
            Kind::Invert => "invert",
            Kind::SpectralScan => "spectral-scan",
            Kind::StabilityScan => "stability-scan",
            Kind::DiffusionLimitScan => "diffusion-limit-scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: Kind,
    #[serde(default)]
    pub domain: DomainSpec,
    pub grid: GridSpec,
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub sources: SourceSpec,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub inversion: InversionSpec,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    #[default]
    Disk,
    Rectangle { width: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Ray step for optical depths; `h / 2` when absent.
    #[serde(default)]
    pub h_ray: Option<f64>,
}

fn default_directions() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub absorption: MpaDocument,
    pub scattering: FieldSpec,
    /// Henyey-Greenstein parameter of the phase function; isotropic when absent.
    #[serde(default)]
    pub anisotropy: Option<f64>,
    /// Second absorption law for stability experiments.
    #[serde(default)]
    pub perturbed_absorption: Option<MpaDocument>,
}

/// One constant boundary value or an ordered list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Single(f64),
    List(Vec<f64>),
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Single(1.0)
    }
}

impl SourceSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            SourceSpec::Single(v) => vec![*v],
            SourceSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tol_fp: f64,
    pub tol_si: f64,
    pub tol_inv: f64,
    pub tol_diffusion: f64,
    pub max_fp_iter: usize,
    pub max_si_iter: usize,
    /// Linear transport solver; source iteration unless scaled.
    pub method: Option<LinearMethod>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_fp: 1e-8,
            tol_si: 1e-10,
            tol_inv: 1e-8,
            tol_diffusion: 1e-10,
            max_fp_iter: 200,
            max_si_iter: 5_000,
            method: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionSpec {
    /// `x,y,value` tables of internal data, one per source; synthesized from the
    /// absorption law when empty.
    pub data: Vec<PathBuf>,
    /// Multiplicative noise level applied to the data.
    pub noise: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub delta_floor: f64,
}

impl Default for InversionSpec {
    fn default() -> Self {
        Self {
            data: Vec::new(),
            noise: 0.0,
            seed: 0,
            max_iter: 500,
            delta_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub options: ScanOptions,
    /// Exponent of a rough absorption perturbation `eps^beta xi`; a second scan is run
    /// when present.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Interior margin of the diffusion-limit comparison.
    pub margin: f64,
    /// Dump every assembled Peierls matrix as `i j value` triplets.
    pub matrix_triplets: bool,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            options: ScanOptions::default(),
            beta: None,
            seed: 0,
            margin: 0.2,
            matrix_triplets: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Write the angular density (`x,y,theta,value`) for forward runs.
    pub angular: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { angular: true }
    }
}

/// Parse JSON, reporting line and column on failure.
pub fn parse(text: &str) -> Result<ExperimentSpec, String> {
    serde_json::from_str(text).map_err(|e| {
        format!("line {}, column {}: {e}", e.line(), e.column())
    })
}

impl ExperimentSpec {
    pub fn domain(&self) -> Result<Domain, String> {
        match self.domain {
            DomainSpec::Disk => Ok(Domain::UnitDisk),
            DomainSpec::Rectangle { width, height } => Domain::rectangle(width, height).map_err(|e| e.to_string()),
        }
    }

    pub fn build_grid(&self) -> Result<Arc<SpatialGrid>, String> {
        SpatialGrid::new(self.domain()?, self.grid.h)
            .map(Arc::new)
            .map_err(|e| e.to_string())
    }

    pub fn build_quadrature(&self) -> Result<Arc<AngularQuadrature>, String> {
        AngularQuadrature::uniform(self.grid.directions)
            .map(Arc::new)
            .map_err(|e| e.to_string())
    }

    pub fn h_ray(&self) -> f64 {
        self.grid.h_ray.unwrap_or(0.5 * self.grid.h)
    }

    pub fn boundary_sources(&self) -> Vec<BoundarySource> {
        self.sources
            .values()
            .iter()
            .filter_map(|&c| BoundarySource::constant(c).ok())
            .collect()
    }

    /// Every problem found without running a solver. `base_dir` resolves relative
    /// field and data paths.
    pub fn diagnostics(&self, base_dir: &Path) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |s: String| out.push(s);

        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            push(format!("grid.h must be positive, got {}", self.grid.h));
        }
        if let Some(r) = self.grid.h_ray {
            if !(r > 0.0 && r.is_finite()) {
                push(format!("grid.h_ray must be positive, got {r}"));
            }
        }
        if let Err(e) = AngularQuadrature::uniform(self.grid.directions) {
            push(format!("grid.directions: {e}"));
        }
        if let Err(e) = self.domain() {
            push(format!("domain: {e}"));
        }

        if let Err(e) = self.coefficients.absorption.check() {
            push(format!("coefficients.absorption: {e}"));
        }
        if let Some(p) = &self.coefficients.perturbed_absorption {
            if let Err(e) = p.check() {
                push(format!("coefficients.perturbed_absorption: {e}"));
            }
        }
        if let Some((lo, _)) = self.coefficients.scattering.bounds() {
            if lo < 0.0 {
                push(format!("coefficients.scattering: Sigma_s >= 0 violated: inf = {lo}"));
            }
            let needs_positive = matches!(
                self.kind,
                Kind::Diffusion | Kind::SpectralScan | Kind::StabilityScan | Kind::DiffusionLimitScan
            );
            if needs_positive && lo <= 0.0 {
                push(format!(
                    "coefficients.scattering: {} needs Sigma_s > 0, inf = {lo}",
                    self.kind.name()
                ));
            }
        }
        if let Some(g) = self.coefficients.anisotropy {
            if !(g.abs() < 1.0) {
                push(format!("coefficients.anisotropy must lie in (-1, 1), got {g}"));
            }
            if self.kind != Kind::Forward && self.kind != Kind::Invert {
                push(format!("coefficients.anisotropy is not used by {}", self.kind.name()));
            }
        }

        let src = self.sources.values();
        if src.is_empty() {
            push("sources: at least one source is required".into());
        }
        if let Some(c) = src.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            push(format!("sources: boundary values must satisfy f > 0, got {c}"));
        }
        if src.windows(2).any(|w| !(w[0] < w[1])) {
            push(format!(
                "sources: multi-source lists must be strictly increasing (0 < f_0 < f_1 < ...), \
                 which the ordered-average property of the recovery requires; got {src:?}"
            ));
        }

        for (name, v) in [
            ("tol_fp", self.tolerances.tol_fp),
            ("tol_si", self.tolerances.tol_si),
            ("tol_inv", self.tolerances.tol_inv),
            ("tol_diffusion", self.tolerances.tol_diffusion),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                push(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        if self.tolerances.max_fp_iter == 0 || self.tolerances.max_si_iter == 0 {
            push("tolerances: iteration caps must be positive".into());
        }

        let scan_kind = matches!(
            self.kind,
            Kind::SpectralScan | Kind::StabilityScan | Kind::DiffusionLimitScan
        );
        if scan_kind {
            if self.epsilons.is_empty() {
                push(format!("epsilons: {} needs at least one value", self.kind.name()));
            }
            if let Err(e) = check_eps_list(&self.epsilons) {
                push(format!("epsilons: {e}"));
            }
        } else if !self.epsilons.is_empty() {
            push(format!("epsilons are not used by {}", self.kind.name()));
        }

        let degree = self.coefficients.absorption.degree;
        match self.kind {
            Kind::Invert => {
                let n = src.len();
                if n != 1 && n != degree + 1 {
                    push(format!(
                        "invert: a degree-{degree} law needs {} sources (or one for the absorption field only), got {n}",
                        degree + 1
                    ));
                }
                let inv = &self.inversion;
                if !inv.data.is_empty() && inv.data.len() != n {
                    push(format!("inversion.data: {} files for {n} sources", inv.data.len()));
                }
                for p in &inv.data {
                    if !base_dir.join(p).is_file() {
                        push(format!("inversion.data: {} is not a readable file", p.display()));
                    }
                }
                if !(inv.noise >= 0.0 && inv.noise < 1.0) {
                    push(format!("inversion.noise must lie in [0, 1), got {}", inv.noise));
                }
                if !(inv.delta_floor > 0.0) || inv.max_iter == 0 {
                    push("inversion: delta_floor and max_iter must be positive".into());
                }
                if self.coefficients.absorption.q < 1.0 {
                    push(format!(
                        "coefficients.absorption.q = {} < 1 is not supported by the recovery",
                        self.coefficients.absorption.q
                    ));
                }
            }
            Kind::SpectralScan if degree != 0 => {
                push("spectral-scan analyzes the linear operator: absorption.degree must be 0".into());
            }
            Kind::StabilityScan if self.coefficients.perturbed_absorption.is_none() => {
                push("stability-scan needs coefficients.perturbed_absorption".into());
            }
            _ => {}
        }
        if scan_kind || self.kind == Kind::Diffusion {
            if src.len() > 1 {
                push(format!("{} uses a single source, got {}", self.kind.name(), src.len()));
            }
        }
        if self.kind == Kind::DiffusionLimitScan && !(self.scan.margin >= 0.0) {
            push(format!("scan.margin must be nonnegative, got {}", self.scan.margin));
        }
        if !(self.scan.options.kappa > 0.0) || self.scan.options.mu_dirs < 2 {
            push("scan.options: kappa must be positive and mu_dirs at least 2".into());
        }

        if out.is_empty() {
            // field files are only checked once the grid is known
            if let Ok(grid) = self.build_grid() {
                let mut fields: Vec<(&str, &FieldSpec)> = vec![("coefficients.scattering", &self.coefficients.scattering)];
                for c in &self.coefficients.absorption.coefficients {
                    fields.push(("coefficients.absorption", c));
                }
                for (name, f) in fields {
                    if let Err(e) = f.realize(&grid, base_dir) {
                        out.push(format!("{name}: {e}"));
                    }
                }
                if let Err(e) = self.coefficients.absorption.build(&grid, base_dir) {
                    out.push(format!("coefficients.absorption: {e}"));
                }
                if let Some(p) = &self.coefficients.perturbed_absorption {
                    if let Err(e) = p.build(&grid, base_dir) {
                        out.push(format!("coefficients.perturbed_absorption: {e}"));
                    }
                }
            }
        }
        out
    }
}
