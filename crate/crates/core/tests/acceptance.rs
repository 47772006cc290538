//! Acceptance experiments. Runs as a plain binary so every criterion prints one line.
//! Criteria listed in `KNOWN_FAILING` are reported but do not fail the target.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semirte::diffusion::{diffusion_data, lp_stability_ratio, solve_semilinear_diffusion, DiffusionProblem};
use semirte::inversion::{recover_mpa_coefficients, InversionConfig};
use semirte::peierls::nystrom_scalar_flux;
use semirte::scan::{diffusion_limit_scan, epsilon_scan, perturbed_epsilon_scan, stability_scan, ScanOptions};
use semirte::scattering::am_gm_gap;
use semirte::*;

const KNOWN_FAILING: &[usize] = &[8, 9, 12];
const EPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
const J01_SQ: f64 = 5.783_185_962_946_784;

struct Outcome {
    pass: bool,
    detail: String,
}

fn grid(h: f64) -> Arc<SpatialGrid> {
    Arc::new(SpatialGrid::new(Domain::UnitDisk, h).unwrap())
}

fn quad(n: usize) -> Arc<AngularQuadrature> {
    Arc::new(AngularQuadrature::uniform(n).unwrap())
}

fn random_model(g: &Arc<SpatialGrid>, rng: &mut ChaCha8Rng) -> MpaModel {
    let k = rng.random_range(0..=2usize);
    let mut coeffs = vec![ScalarField::constant(g.clone(), rng.random_range(0.2..=1.0))];
    for _ in 0..k {
        let c = rng.random_range(0.0..=0.5);
        let a = rng.random_range(0.0..=0.5) * c;
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        coeffs.push(ScalarField::from_fn(g.clone(), move |p| {
            c + a * (p[0] * dir.cos() + p[1] * dir.sin())
        }));
    }
    MpaModel::new(coeffs, 1.0).unwrap()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let g = grid(1.0 / 64.0);
    let q = quad(32);
    let one = ScalarField::constant(g.clone(), 1.0);
    let zero = ScalarField::constant(g.clone(), 0.0);
    let f = BoundarySource::constant(1.0).unwrap();
    let sol = solve_linear_rte(&one, &zero, &ScatteringModel::Isotropic, &f, &q, &TransportConfig::for_grid(&g)).unwrap();
    let mut err: f64 = 0.0;
    for i in 0..g.len() {
        for j in 0..q.len() {
            let tau = g.domain().exit_distance(g.center(i), q.dir(j)).unwrap();
            err = err.max((sol.u.get(i, j) - (-tau).exp()).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: err <= 1e-3 && secs < 10.0,
        detail: format!("max |u - exp(-tau)| = {err:.3e} (<= 1e-3), {secs:.1} s (< 10 s)"),
    }
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let g = grid(1.0 / 16.0);
    let q = quad(16);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_low = f64::INFINITY;
    let mut worst_high = f64::INFINITY;
    for _ in 0..20 {
        let model = random_model(&g, &mut rng);
        let ss = ScalarField::constant(g.clone(), rng.random_range(0.0..=2.0));
        let f = BoundarySource::constant(rng.random_range(0.5..=2.0)).unwrap();
        let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g));
        let sol = fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        let lower = f.lower() * (-2.0 * model.envelope(f.upper())).exp();
        worst_low = worst_low.min(sol.u.min() - (lower - 1e-6));
        worst_high = worst_high.min(f.upper() + 1e-6 - sol.u.max());
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: worst_low >= 0.0 && worst_high >= 0.0 && secs < 120.0,
        detail: format!(
            "20 models: min(u - c) = {worst_low:.3e}, min(C - u) = {worst_high:.3e}, {secs:.1} s"
        ),
    }
}

fn criterion_3() -> Outcome {
    let g = grid(1.0 / 16.0);
    let q = quad(16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tol = 1e-8;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let model = random_model(&g, &mut rng);
        let ss = ScalarField::constant(g.clone(), rng.random_range(0.0..=2.0));
        let f = BoundarySource::constant(rng.random_range(0.5..=2.0)).unwrap();
        let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g).with_tol(1e-12)).with_tol(tol);
        let a = fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg.clone().with_init(InitialGuess::Zero)).unwrap();
        let b = fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg.with_init(InitialGuess::Upper)).unwrap();
        worst = worst.max(a.u.sup_distance(&b.u));
    }
    Outcome {
        pass: worst <= 10.0 * tol,
        detail: format!("max sup |u(m0=0) - u(m0=sup f)| = {worst:.3e} (<= {:.0e})", 10.0 * tol),
    }
}

fn criterion_4() -> Outcome {
    let g = grid(1.0 / 32.0);
    let q = quad(16);
    let model = MpaModel::new(
        vec![
            ScalarField::from_fn(g.clone(), |p| 1.0 + 0.3 * p[0]),
            ScalarField::constant(g.clone(), 0.5),
            ScalarField::from_fn(g.clone(), |p| 0.25 + 0.1 * p[1]),
        ],
        1.0,
    )
    .unwrap();
    let ss = ScalarField::constant(g.clone(), 1.0);
    let means: Vec<ScalarField> = [0.5, 1.0, 1.5]
        .iter()
        .map(|&c| {
            let f = BoundarySource::constant(c).unwrap();
            let cfg = FixedPointConfig::new(TransportConfig::for_grid(&g));
            fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap().mean
        })
        .collect();
    let mut gap = f64::INFINITY;
    for w in means.windows(2) {
        for i in 0..g.len() {
            gap = gap.min(w[1].values()[i] - w[0].values()[i]);
        }
    }
    Outcome {
        pass: gap > 0.0,
        detail: format!("min over cells of <u_(i+1)> - <u_i> = {gap:.3e} (> 0)"),
    }
}

fn criterion_5() -> Outcome {
    let q = AngularQuadrature::uniform(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..256).map(|_| rng.random_range(0.01..5.0)).collect();
        let k = ScatteringModel::sinkhorn(&q, &raw).unwrap();
        let u: Vec<f64> = (0..16).map(|_| rng.random_range(1e-3..10.0)).collect();
        let phi: Vec<f64> = (0..16).map(|_| rng.random_range(-10.0..10.0)).collect();
        let gap = am_gm_gap(&k, q.weight(), &u, &phi);
        worst = worst.min(gap);
        if gap < -1e-12 {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("1000 triples: {violations} violations, smallest gap {worst:.3e}"),
    }
}

fn criterion_6() -> Outcome {
    let h = 1.0 / 32.0;
    let g = grid(h);
    let q = quad(16);
    let one = ScalarField::constant(g.clone(), 1.0);
    let f = BoundarySource::constant(1.0).unwrap();
    let phi = nystrom_scalar_flux(&one, &one, &f, h / 2.0, 1e-10).unwrap();
    let si = solve_linear_rte(&one, &one, &ScatteringModel::Isotropic, &f, &q, &TransportConfig::for_grid(&g)).unwrap();
    let m = si.u.angular_average();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..g.len() {
        if g.distance_to_boundary(i) > 0.1 {
            err = err.max((m.values()[i] - phi.values()[i]).abs());
            scale = scale.max(phi.values()[i].abs());
        }
    }
    let rel = err / scale;
    Outcome {
        pass: rel <= 1e-2,
        detail: format!("interior relative sup difference {rel:.3e} (<= 1e-2)"),
    }
}

fn round_trip_error(h: f64, tol: f64) -> [f64; 2] {
    let g = grid(h);
    let q = quad(16);
    let s0 = ScalarField::constant(g.clone(), 1.0);
    let s1 = ScalarField::from_fn(g.clone(), |p| {
        0.5 + 0.25 * (-((p[0] - 0.2).powi(2) + p[1].powi(2)) / (2.0 * 0.09)).exp()
    });
    let model = MpaModel::new(vec![s0.clone(), s1.clone()], 1.0).unwrap();
    let ss = ScalarField::constant(g.clone(), 1.0);
    let tcfg = TransportConfig::for_grid(&g).with_tol(tol * 1e-2);
    let mut hs = Vec::new();
    let mut fs = Vec::new();
    for c in [0.5, 1.0] {
        let f = BoundarySource::constant(c).unwrap();
        let cfg = FixedPointConfig::new(tcfg.clone()).with_tol(tol * 1e-1);
        let sol = fixed_point_solve(&model, &ss, &ScatteringModel::Isotropic, &f, &q, &cfg).unwrap();
        hs.push(internal_data(&model, &sol).unwrap());
        fs.push(f);
    }
    let cfg = InversionConfig::new(tcfg).with_tol(tol);
    let r = recover_mpa_coefficients(&hs, &fs, &ss, &ScatteringModel::Isotropic, &q, &cfg).unwrap();
    let mut err = [0.0; 2];
    let mut norm = [0.0; 2];
    for i in 0..g.len() {
        if g.distance_to_boundary(i) > 0.1 {
            for (k, truth) in [&s0, &s1].iter().enumerate() {
                err[k] += (r.coefficients[k].values()[i] - truth.values()[i]).abs();
                norm[k] += truth.values()[i].abs();
            }
        }
    }
    [err[0] / norm[0], err[1] / norm[1]]
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let coarse = round_trip_error(1.0 / 32.0, 1e-7);
    let fine = round_trip_error(1.0 / 64.0, 2.5e-8);
    let secs = t.elapsed().as_secs_f64();
    let accurate = fine.iter().all(|&e| e < 1e-2);
    let decreasing = fine[0] < coarse[0] && fine[1] < coarse[1];
    Outcome {
        pass: accurate && decreasing && secs < 300.0,
        detail: format!(
            "rel L1 (sigma_0, sigma_1): h=1/32 {:.2e}, {:.2e}; h=1/64 {:.2e}, {:.2e}; {secs:.0} s",
            coarse[0], coarse[1], fine[0], fine[1]
        ),
    }
}

fn spectral_criteria() -> (Outcome, Outcome, Outcome) {
    let t = Instant::now();
    let g = grid(1.0 / 32.0);
    let one = ScalarField::constant(g.clone(), 1.0);
    let table = epsilon_scan(&one, &one, &EPS, &ScanOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let gaps: Vec<String> = table.rows.iter().map(|r| format!("{:.4e}", r.one_minus_rho)).collect();
    let c8 = Outcome {
        pass: (1.85..=2.15).contains(&table.slope) && secs < 600.0,
        detail: format!(
            "N = {}, 1 - rho = [{}], slope {:.4} (in [1.85, 2.15]), {secs:.0} s",
            g.len(),
            gaps.join(", "),
            table.slope
        ),
    };

    let ratios: Vec<f64> = table.rows.iter().map(|r| r.lambda_eps_over_eps).collect();
    let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0]);
    let last = *ratios.last().unwrap();
    let near_limit = (last / table.lambda_star - 1.0).abs() <= 0.03;
    let fd_vs_half = (table.lambda_star / (0.5 * J01_SQ) - 1.0).abs();
    let fd_vs_full = (table.lambda_star / J01_SQ - 1.0).abs();
    let c9 = Outcome {
        pass: nonincreasing && near_limit && fd_vs_half <= 0.01,
        detail: format!(
            "lambda/eps = {ratios:.4?} nonincreasing {nonincreasing}; eps=0.05 vs FD {:.4}: {:.2}% (<= 3%); \
             FD vs j01^2/2: {:.1}% (<= 1%), FD vs j01^2: {:.3}%",
            table.lambda_star,
            100.0 * (last / table.lambda_star - 1.0).abs(),
            100.0 * fd_vs_half,
            100.0 * fd_vs_full
        ),
    };

    let pert = perturbed_epsilon_scan(&one, &one, &EPS, 1.0, 2024, &ScanOptions::default()).unwrap();
    let diff = (pert.slope - table.slope).abs();
    let c10 = Outcome {
        pass: diff < 0.1,
        detail: format!("slope {:.4} -> {:.4}, change {diff:.2e} (< 0.1)", table.slope, pert.slope),
    };
    (c8, c9, c10)
}

fn diffusion_criteria() -> (Outcome, Outcome) {
    let g = grid(1.0 / 32.0);
    let q = quad(16);
    let model = MpaModel::constant(&g, &[1.0, 0.5]).unwrap();
    let ss = ScalarField::constant(g.clone(), 1.0);
    let f = BoundarySource::constant(1.0).unwrap();
    let eps = [0.2, 0.1, 0.05];

    let (_, rows) = diffusion_limit_scan(&model, &ss, &f, &eps, &q, 0.2, 1e-8).unwrap();
    let ratios: Vec<f64> = rows.iter().skip(1).map(|r| r.ratio).collect();
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let c11 = Outcome {
        pass: ratios.iter().all(|r| (1.3..=3.0).contains(r)),
        detail: format!("errors {errors:.4?}, halving ratios {ratios:.3?} (in [1.3, 3.0])"),
    };

    let pert = MpaModel::new(
        vec![
            ScalarField::from_fn(g.clone(), |p| if p[0].hypot(p[1]) > 0.85 { 1.2 } else { 1.0 }),
            ScalarField::constant(g.clone(), 0.5),
        ],
        1.0,
    )
    .unwrap();
    let rows = stability_scan(&model, &pert, &ss, &f, &eps, &q, 1e-8).unwrap();
    let w: Vec<f64> = rows.iter().map(|r| r.weighted.ratio).collect();
    let u: Vec<f64> = rows.iter().map(|r| r.unweighted.ratio).collect();
    let spread = w.iter().cloned().fold(0.0, f64::max) / w.iter().cloned().fold(f64::INFINITY, f64::min);
    let growth = u[2] / u[0];
    let c12 = Outcome {
        pass: spread < 3.0 && growth >= 3.0,
        detail: format!(
            "weighted {w:.3?} spread {spread:.2} (< 3); unweighted {u:.3?} growth {growth:.2} (>= 3)"
        ),
    };
    (c11, c12)
}

fn diffusion_lp_ratios(h: f64, centre: Point) -> [f64; 2] {
    let g = grid(h);
    let base = MpaModel::constant(&g, &[1.0, 0.5]).unwrap();
    let pert = MpaModel::new(
        vec![
            ScalarField::from_fn(g.clone(), move |p| {
                1.0 + 0.3 * (-((p[0] - centre[0]).powi(2) + (p[1] - centre[1]).powi(2)) / 0.08).exp()
            }),
            ScalarField::constant(g.clone(), 0.5),
        ],
        1.0,
    )
    .unwrap();
    let ss = ScalarField::constant(g.clone(), 1.0);
    let f = BoundarySource::constant(1.0).unwrap();
    let solve = |m: &MpaModel| {
        let p = DiffusionProblem::new(m.clone(), &ss, f.clone()).unwrap();
        let u = solve_semilinear_diffusion(&p, 1e-10).unwrap().u;
        (m.eval_sigma_a(&u).unwrap(), diffusion_data(&u, m).unwrap())
    };
    let (s, hd) = solve(&base);
    let (st, hdt) = solve(&pert);
    [1.0, 2.0].map(|p| lp_stability_ratio(&hd, &hdt, &s, &st, p).unwrap())
}

fn criterion_13() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut shown = Vec::new();
    for _ in 0..5 {
        let r = rng.random_range(0.0..0.6);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let c = [r * a.cos(), r * a.sin()];
        let coarse = diffusion_lp_ratios(1.0 / 32.0, c);
        let fine = diffusion_lp_ratios(1.0 / 64.0, c);
        for k in 0..2 {
            worst = worst.max((fine[k] / coarse[k] - 1.0).abs());
        }
        shown.push(format!("{:.3}/{:.3}", coarse[1], fine[1]));
    }
    Outcome {
        pass: worst <= 0.2,
        detail: format!(
            "max relative change h -> h/2 over p in {{1, 2}}: {:.2}% (<= 20%); L2 ratios {}",
            100.0 * worst,
            shown.join(" ")
        ),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    report(7, criterion_7());
    let (c8, c9, c10) = spectral_criteria();
    report(8, c8);
    report(9, c9);
    report(10, c10);
    let (c11, c12) = diffusion_criteria();
    report(11, c11);
    report(12, c12);
    report(13, criterion_13());

    let unexpected: Vec<usize> = results
        .iter()
        .filter(|(n, o)| !o.pass && !KNOWN_FAILING.contains(n))
        .map(|(n, _)| *n)
        .collect();
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} pass; known failures {KNOWN_FAILING:?}", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
