//! Execution of a validated spec inside its run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use semirte::diffusion::{diffusion_data, solve_semilinear_diffusion, DiffusionProblem};
use semirte::forward::internal_data_from;
use semirte::inversion::{
    inject_noise, recover_absorption_single, recover_mpa_coefficients, InversionConfig, ReconstructionResult,
};
use semirte::io::{angular_csv, fmt_f64, read_scalar_csv, scalar_csv};
use semirte::peierls::assemble_peierls;
use semirte::scan::{
    diffusion_limit_scan, epsilon_scan, perturbed_epsilon_scan, stability_scan, ScanOptions, ScanTable,
};
use semirte::spectral::ScaledCoefficients;
use semirte::{
    fixed_point_solve, lemma_lower_bound, AngularQuadrature, FixedPointConfig, MpaModel, ScalarField,
    ScatteringModel, SpatialGrid, TransportConfig,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::plot;
use crate::spec::{ExperimentSpec, Kind};

#[derive(Debug)]
pub enum RunError {
    /// Spec could not be parsed or failed validation; nothing was written.
    Validation(Vec<String>),
    /// A solver stage failed; partial outputs and a failed manifest remain.
    Stage { stage: String, error: semirte::Error, dir: PathBuf },
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Stage { error, .. } if error.is_iteration() => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(d) => write!(f, "invalid spec:\n  {}", d.join("\n  ")),
            RunError::Stage { stage, error, dir } => {
                write!(f, "stage `{stage}` failed: {error} (partial outputs in {})", dir.display())
            }
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub h: f64,
    pub cells: usize,
    pub nx: usize,
    pub ny: usize,
    pub directions: usize,
    pub h_ray: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: Kind,
    pub spec_sha256: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub spec: ExperimentSpec,
    pub grid: GridInfo,
    pub stages: Vec<StageTiming>,
    /// sha256 of every file written next to the manifest.
    pub outputs: BTreeMap<String, String>,
    pub summary: Value,
}

/// Content hash of the resolved spec.
pub fn spec_hash(spec: &ExperimentSpec) -> String {
    let bytes = serde_json::to_vec(spec).expect("spec serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Run directory `<out>/<first 16 hex digits of the spec hash>`.
pub fn run_dir(out: &Path, spec: &ExperimentSpec) -> PathBuf {
    out.join(&spec_hash(spec)[..16])
}

struct Run {
    dir: PathBuf,
    stages: Vec<StageTiming>,
    outputs: BTreeMap<String, String>,
    summary: serde_json::Map<String, Value>,
}

impl Run {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.insert(name.to_string(), hex::encode(Sha256::digest(contents.as_bytes())));
        Ok(())
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> semirte::Result<T>) -> Result<T, RunError> {
        info!("stage {name}");
        let t = Instant::now();
        let r = f();
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r.map_err(|error| RunError::Stage {
            stage: name.to_string(),
            error,
            dir: self.dir.clone(),
        })
    }

    fn note(&mut self, key: &str, v: Value) {
        self.summary.insert(key.to_string(), v);
    }
}

struct Setup {
    grid: Arc<SpatialGrid>,
    quad: Arc<AngularQuadrature>,
    model: MpaModel,
    sigma_s: ScalarField,
    scattering: ScatteringModel,
}

fn setup(spec: &ExperimentSpec, base: &Path) -> Result<Setup, Vec<String>> {
    let one = |e: String| vec![e];
    let grid = spec.build_grid().map_err(one)?;
    let quad = spec.build_quadrature().map_err(one)?;
    let model = spec
        .coefficients
        .absorption
        .build(&grid, base)
        .map_err(|e| vec![format!("coefficients.absorption: {e}")])?;
    let sigma_s = spec
        .coefficients
        .scattering
        .realize(&grid, base)
        .map_err(|e| vec![format!("coefficients.scattering: {e}")])?;
    if sigma_s.min() < 0.0 {
        return Err(vec![format!("coefficients.scattering: Sigma_s >= 0 violated: min = {}", sigma_s.min())]);
    }
    let scattering = match spec.coefficients.anisotropy {
        None => ScatteringModel::Isotropic,
        Some(g) => ScatteringModel::from_phase_function(&quad, move |c| (1.0 - g * g) / (1.0 + g * g - 2.0 * g * c))
            .map_err(|e| vec![format!("coefficients.anisotropy: {e}")])?,
    };
    Ok(Setup {
        grid,
        quad,
        model,
        sigma_s,
        scattering,
    })
}

fn transport_config(spec: &ExperimentSpec, grid: &SpatialGrid) -> TransportConfig {
    let mut t = TransportConfig::for_grid(grid).with_tol(spec.tolerances.tol_si);
    t.h_ray = spec.h_ray();
    t.max_iter = spec.tolerances.max_si_iter;
    if let Some(m) = spec.tolerances.method {
        t.method = m;
    }
    t
}

fn suffixed(stem: &str, i: usize, n: usize) -> String {
    if n == 1 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_{i}.csv")
    }
}

/// Validate, create the run directory and execute. Returns the manifest written.
pub fn run(spec: &ExperimentSpec, base: &Path, out: &Path) -> Result<RunManifest, RunError> {
    let diags = spec.diagnostics(base);
    if !diags.is_empty() {
        return Err(RunError::Validation(diags));
    }
    let s = setup(spec, base).map_err(RunError::Validation)?;
    let dir = run_dir(out, spec);
    fs::create_dir_all(&dir).map_err(|e| RunError::Io(format!("{}: {e}", dir.display())))?;
    info!("run directory {}", dir.display());

    let mut run = Run {
        dir: dir.clone(),
        stages: Vec::new(),
        outputs: BTreeMap::new(),
        summary: serde_json::Map::new(),
    };
    let result = match spec.kind {
        Kind::Forward => forward(spec, &s, &mut run),
        Kind::Diffusion => diffusion(spec, &s, &mut run),
        Kind::Invert => invert(spec, base, &s, &mut run),
        Kind::SpectralScan => spectral(spec, base, &s, &mut run),
        Kind::StabilityScan => stability(spec, base, &s, &mut run),
        Kind::DiffusionLimitScan => diffusion_limit(spec, &s, &mut run),
    };
    let manifest = RunManifest {
        tool: "semirte",
        version: env!("CARGO_PKG_VERSION"),
        kind: spec.kind,
        spec_sha256: spec_hash(spec),
        status: if result.is_ok() { "ok" } else { "failed" },
        error: result.as_ref().err().map(|e| e.to_string()),
        spec: spec.clone(),
        grid: GridInfo {
            h: s.grid.h(),
            cells: s.grid.len(),
            nx: s.grid.nx(),
            ny: s.grid.ny(),
            directions: s.quad.len(),
            h_ray: spec.h_ray(),
        },
        stages: run.stages,
        outputs: run.outputs,
        summary: Value::Object(run.summary),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join("manifest.json");
    fs::write(&path, text + "\n").map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    result.map(|_| manifest)
}

fn forward(spec: &ExperimentSpec, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let sources = spec.boundary_sources();
    let n = sources.len();
    let tol = &spec.tolerances;
    let mut per_source = Vec::new();
    for (i, f) in sources.iter().enumerate() {
        let mut cfg = FixedPointConfig::new(transport_config(spec, &s.grid)).with_tol(tol.tol_fp);
        cfg.max_iter = tol.max_fp_iter;
        let sol = run.stage(&format!("forward[{i}]"), || {
            fixed_point_solve(&s.model, &s.sigma_s, &s.scattering, f, &s.quad, &cfg)
        })?;
        let h = run.stage(&format!("data[{i}]"), || internal_data_from(&s.model, &sol.mean))?;
        if spec.output.angular {
            run.write(&suffixed("u", i, n), &angular_csv(&sol.u))?;
        }
        run.write(&suffixed("mean", i, n), &scalar_csv(&sol.mean))?;
        run.write(&suffixed("H", i, n), &scalar_csv(&h))?;
        per_source.push(json!({
            "source": f.upper(),
            "iterations": sol.iterations,
            "residual": sol.residuals.last(),
            "relaxation": sol.theta,
            "u_min": sol.u.min(),
            "u_max": sol.u.max(),
            "lemma_lower_bound": lemma_lower_bound(&s.model, f),
        }));
    }
    run.note("sources", Value::Array(per_source));
    Ok(())
}

fn diffusion(spec: &ExperimentSpec, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let f = spec.boundary_sources().remove(0);
    let problem = run.stage("setup", || DiffusionProblem::new(s.model.clone(), &s.sigma_s, f))?;
    let sol = run.stage("diffusion", || solve_semilinear_diffusion(&problem, spec.tolerances.tol_diffusion))?;
    let h = run.stage("data", || diffusion_data(&sol.u, &s.model))?;
    run.write("U.csv", &scalar_csv(&sol.u))?;
    run.write("comparison.csv", &scalar_csv(&sol.comparison))?;
    run.write("H.csv", &scalar_csv(&h))?;
    run.note("newton_steps", json!(sol.newton_steps));
    run.note("picard_steps", json!(sol.picard_steps));
    run.note("residual", json!(sol.residuals.last()));
    run.note("u_min", json!(sol.u.min()));
    run.note("u_max", json!(sol.u.max()));
    Ok(())
}

fn relative_l1(estimate: &ScalarField, truth: &ScalarField) -> f64 {
    let (mut e, mut t) = (0.0, 0.0);
    for (a, b) in estimate.values().iter().zip(truth.values()) {
        if a.is_finite() {
            e += (a - b).abs();
            t += b.abs();
        }
    }
    if t == 0.0 {
        e
    } else {
        e / t
    }
}

fn invert(spec: &ExperimentSpec, base: &Path, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let sources = spec.boundary_sources();
    let n = sources.len();
    let inv = &spec.inversion;
    let synthetic = inv.data.is_empty();
    let mut data = Vec::new();
    for (i, f) in sources.iter().enumerate() {
        let h = if synthetic {
            let mut cfg = FixedPointConfig::new(transport_config(spec, &s.grid)).with_tol(spec.tolerances.tol_fp);
            cfg.max_iter = spec.tolerances.max_fp_iter;
            let sol = run.stage(&format!("synthesize[{i}]"), || {
                fixed_point_solve(&s.model, &s.sigma_s, &s.scattering, f, &s.quad, &cfg)
            })?;
            run.stage(&format!("data[{i}]"), || internal_data_from(&s.model, &sol.mean))?
        } else {
            run.stage(&format!("read[{i}]"), || read_scalar_csv(&base.join(&inv.data[i]), &s.grid))?
        };
        let h = if inv.noise > 0.0 {
            inject_noise(&h, inv.noise, inv.seed.wrapping_add(i as u64))
        } else {
            h
        };
        run.write(&suffixed("H", i, n), &scalar_csv(&h))?;
        data.push(h);
    }

    let cfg = InversionConfig {
        tol_inv: spec.tolerances.tol_inv,
        max_iter: inv.max_iter,
        delta_floor: inv.delta_floor,
        q: spec.coefficients.absorption.q,
        transport: transport_config(spec, &s.grid),
    };
    let r: ReconstructionResult = run.stage("inversion", || {
        if n == 1 {
            recover_absorption_single(&data[0], &s.sigma_s, &s.scattering, &sources[0], &s.quad, &cfg)
        } else {
            recover_mpa_coefficients(&data, &sources, &s.sigma_s, &s.scattering, &s.quad, &cfg)
        }
    })?;

    for (i, ill) in r.illuminations.iter().enumerate() {
        run.write(&suffixed("absorption", i, n), &scalar_csv(&ill.absorption))?;
        run.write(&suffixed("mean", i, n), &scalar_csv(&ill.mean))?;
    }
    for (k, c) in r.coefficients.iter().enumerate() {
        run.write(&format!("sigma_a_{k}.csv"), &scalar_csv(c))?;
    }
    let ills: Vec<Value> = r
        .illuminations
        .iter()
        .map(|ill| {
            json!({
                "iterations": ill.iterations,
                "residual": ill.residuals.last(),
                "floored_cells": ill.floored_cells,
            })
        })
        .collect();
    run.note("illuminations", Value::Array(ills));
    run.note("residual", json!(r.residual));
    run.note("flagged_cells", json!(r.flagged_cells));
    run.note("condition_percentiles", json!(r.condition_percentiles()));
    if synthetic && inv.noise == 0.0 {
        let errs: Vec<f64> = r
            .coefficients
            .iter()
            .zip(s.model.coefficients())
            .map(|(e, t)| relative_l1(e, t))
            .collect();
        run.note("coefficient_relative_l1_error", json!(errs));
    }
    Ok(())
}

fn scan_options(spec: &ExperimentSpec) -> ScanOptions {
    let mut o = spec.scan.options.clone();
    if o.h_ray.is_none() {
        o.h_ray = spec.grid.h_ray;
    }
    o
}

fn scan_summary(t: &ScanTable) -> Value {
    json!({
        "slope": t.slope,
        "lambda_star": t.lambda_star,
        "power_iterations": t.rows.iter().map(|r| r.power_iterations).collect::<Vec<_>>(),
        "diagnostics": t.rows.iter().map(|r| r.diagnostics).collect::<Vec<_>>(),
    })
}

fn spectral(spec: &ExperimentSpec, base: &Path, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let sigma_a = spec.coefficients.absorption.coefficients[0]
        .realize(&s.grid, base)
        .map_err(|e| RunError::Validation(vec![e.to_string()]))?;
    let opts = scan_options(spec);
    let table = run.stage("spectral-scan", || epsilon_scan(&sigma_a, &s.sigma_s, &spec.epsilons, &opts))?;
    run.write("scan.csv", &table.to_csv())?;
    run.write("scan.gp", &plot::spectral_gap("scan.csv", spec.scan.beta.map(|_| "scan_perturbed.csv")))?;
    run.note("scan", scan_summary(&table));
    if let Some(beta) = spec.scan.beta {
        let pert = run.stage("perturbed-scan", || {
            perturbed_epsilon_scan(&sigma_a, &s.sigma_s, &spec.epsilons, beta, spec.scan.seed, &opts)
        })?;
        run.write("scan_perturbed.csv", &pert.to_csv())?;
        run.note("perturbed_scan", scan_summary(&pert));
        run.note("slope_change", json!((pert.slope - table.slope).abs()));
    }
    if spec.scan.matrix_triplets {
        let h_ray = opts.h_ray.unwrap_or(0.5 * s.grid.h());
        for &e in &spec.epsilons {
            let p = run.stage(&format!("peierls[{e}]"), || {
                assemble_peierls(&ScaledCoefficients::new(e, sigma_a.clone(), s.sigma_s.clone())?, h_ray)
            })?;
            run.write(&format!("peierls_eps_{e}.txt"), &p.triplets())?;
        }
    }
    Ok(())
}

fn stability(spec: &ExperimentSpec, base: &Path, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let doc = spec.coefficients.perturbed_absorption.as_ref().expect("validated");
    let perturbed = doc
        .build(&s.grid, base)
        .map_err(|e| RunError::Validation(vec![format!("coefficients.perturbed_absorption: {e}")]))?;
    let f = spec.boundary_sources().remove(0);
    let rows = run.stage("stability-scan", || {
        stability_scan(&s.model, &perturbed, &s.sigma_s, &f, &spec.epsilons, &s.quad, spec.tolerances.tol_fp)
    })?;
    let mut csv = String::from(
        "epsilon,weighted_lhs,weighted_rhs,weighted_ratio,unweighted_lhs,unweighted_rhs,unweighted_ratio\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.eps),
            fmt_f64(r.weighted.lhs),
            fmt_f64(r.weighted.rhs),
            fmt_f64(r.weighted.ratio),
            fmt_f64(r.unweighted.lhs),
            fmt_f64(r.unweighted.rhs),
            fmt_f64(r.unweighted.ratio)
        );
    }
    run.write("stability.csv", &csv)?;
    run.write("stability.gp", &plot::stability("stability.csv"))?;
    let w: Vec<f64> = rows.iter().map(|r| r.weighted.ratio).collect();
    let u: Vec<f64> = rows.iter().map(|r| r.unweighted.ratio).collect();
    let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    run.note("weighted_ratio_spread", json!(spread(&w)));
    run.note("unweighted_ratio_growth", json!(u.last().unwrap() / u[0]));
    Ok(())
}

fn diffusion_limit(spec: &ExperimentSpec, s: &Setup, run: &mut Run) -> Result<(), RunError> {
    let f = spec.boundary_sources().remove(0);
    let (limit, rows) = run.stage("diffusion-limit-scan", || {
        diffusion_limit_scan(
            &s.model,
            &s.sigma_s,
            &f,
            &spec.epsilons,
            &s.quad,
            spec.scan.margin,
            spec.tolerances.tol_fp,
        )
    })?;
    let mut csv = String::from("epsilon,error,ratio,picard_iterations\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_f64(r.eps),
            fmt_f64(r.error),
            fmt_f64(r.ratio),
            r.picard_iterations
        );
    }
    run.write("diffusion_limit.csv", &csv)?;
    run.write("U.csv", &scalar_csv(&limit.u))?;
    run.write("diffusion_limit.gp", &plot::diffusion_limit("diffusion_limit.csv"))?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.error)).collect();
    run.note("error_slope", json!(semirte::scan::loglog_slope(&pts)));
    Ok(())
}
