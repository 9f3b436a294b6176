//! The ten end-to-end acceptance criteria. Each prints one PASS/FAIL line to
//! standard error; the test fails if any criterion fails.
//!
//! `SLWR_CRITERIA=2,7` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slwr::parallel;
use slwr::triangle::{run_triangle, TriangleReport, TriangleSettings};
use slwr_core::fpe::{mollified_delta, parabolic_limit, solve_fpe, Closure, DensityGrid, DensityMesh, FpeSettings};
use slwr_core::inference::{congestion_risk, flow_pushforward, recover_density, summary_stats};
use slwr_core::math::erf;
use slwr_core::model::{FluxFunction, InitialProfile, NoiseMode, NoiseStructure, SpatialBasis, TrafficModel};
use slwr_core::net::residual::{grid_residuals, residual_value};
use slwr_core::net::{
    closed_velocity, train, Architecture, ClosureKind, ClosureModel, ObservationKind, ObservationSet, Scaling,
    ScoreDerivatives, ScoreModel, TrainConfig,
};
use slwr_core::pfode::{sample_particles, FnScore};
use slwr_core::spde::{deterministic_lwr, simulate_ensemble, Boundary, SpaceTimeGrid};

struct Outcome {
    passed: bool,
    detail: String,
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn greenshields() -> FluxFunction {
    FluxFunction::greenshields(1.0, 1.0).unwrap()
}

fn constant_sigma_model(c: f64, horizon: f64) -> TrafficModel {
    TrafficModel::new(
        greenshields(),
        NoiseStructure::ConstantDiffusion(c),
        1.0,
        horizon,
        InitialProfile::Constant(0.5),
        0.0,
    )
    .unwrap()
}

fn quadratic_noise(alpha: f64) -> NoiseStructure {
    NoiseStructure::Modes(vec![NoiseMode::new(alpha, vec![1.0], SpatialBasis::Constant, 1.0).unwrap()])
}

/// Runs `[t_from, t_to]` with the largest even step under `dt_max`, keeping
/// only the final density.
fn advance(model: &TrafficModel, mesh: &DensityMesh, p: &[f64], t_from: f64, t_to: f64, dt_max: f64) -> Vec<f64> {
    let settings = FpeSettings {
        t_start: t_from,
        t_end: t_to,
        dt: dt_max,
        store_every: usize::MAX,
    };
    let g = solve_fpe(model, &Closure::Zero, 0.5, mesh, settings, p).unwrap();
    g.p.last().unwrap().clone()
}

// 1 ------------------------------------------------------------------------

fn heat_series(rho: f64, rho0: f64, eps: f64, d: f64, t: f64) -> f64 {
    let mut p = 1.0;
    for n in 1..400 {
        let k = n as f64 * PI;
        let decay = (-k * k * (0.5 * eps * eps + d * t)).exp();
        if decay < 1e-18 {
            break;
        }
        p += 2.0 * (k * rho0).cos() * (k * rho).cos() * decay;
    }
    p
}

fn criterion_1() -> Outcome {
    let c = 0.02;
    let model = constant_sigma_model(c, 40.0);
    let mesh = DensityMesh::new(400, 1.0).unwrap();
    let eps = 0.02;
    let dt = 0.5 * parabolic_limit(&model, &mesh, 0.5);
    let mut p = mollified_delta(&mesh, 0.5, eps).unwrap();
    let mut t = 0.0;
    let mut errs = Vec::new();
    for target in [1.0, 5.0, 40.0] {
        p = advance(&model, &mesh, &p, t, target, dt);
        t = target;
        let err = (0..mesh.n_cells)
            .map(|i| (p[i] - heat_series(mesh.center(i), 0.5, eps, 0.5 * c, t)).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let passed = errs.iter().all(|&e| e <= 1e-3);
    outcome(passed, format!("L_inf errors at t = 1, 5, 40: {} (limit 1e-3)", sci(&errs)))
}

// 2 and 3 ------------------------------------------------------------------

fn triangle_report() -> TriangleReport {
    let model = TrafficModel::new(
        greenshields(),
        quadratic_noise(0.2),
        1.0,
        0.5,
        InitialProfile::Sine {
            mean: 0.4,
            amplitude: 0.1,
            wavenumber: 1.0,
        },
        0.0,
    )
    .unwrap();
    let pool = parallel::pool(None).unwrap();
    run_triangle(&pool, &model, Boundary::Periodic, TriangleSettings::new(20_000, 2024)).unwrap()
}

fn criterion_2(r: &TriangleReport) -> Outcome {
    outcome(
        r.w1_pass && !r.advisory,
        format!(
            "W1 = {:.3e} (limit {:.3e}, MC standard error {:.1e}) at x = {:.4}, T = {}",
            r.w1, r.w1_threshold, r.w1_standard_error, r.x, r.t
        ),
    )
}

fn criterion_3(r: &TriangleReport) -> Outcome {
    outcome(
        r.ks_pass,
        format!("KS = {:.4} (limit {}) from t0 = {:.2e} to T = {}", r.ks, r.ks_threshold, r.t0, r.t),
    )
}

// 4 ------------------------------------------------------------------------

fn rel(fd: f64, exact: f64, floor: f64) -> f64 {
    (fd - exact).abs() / exact.abs().max(floor)
}

fn criterion_4() -> Outcome {
    let scaling = Scaling {
        rho_max: 1.0,
        length: 1.0,
        horizon: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let score = ScoreModel::new(Architecture::default(), scaling, 10.0, 11);
    let traffic = TrafficModel::new(
        greenshields(),
        quadratic_noise(0.3),
        1.0,
        1.0,
        InitialProfile::Constant(0.5),
        0.0,
    )
    .unwrap();
    let closures: Vec<ClosureModel> = [ClosureKind::StructuredM, ClosureKind::MeanFieldNet, ClosureKind::Direct]
        .into_iter()
        .map(|kind| {
            let arch = Architecture {
                depth: 2,
                width: 32,
                levels: 4,
            };
            let n = ClosureModel::new(kind, arch, scaling, 1.0, 0).n_params();
            let params = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
            ClosureModel::from_params(kind, arch, scaling, 1.0, params).unwrap()
        })
        .collect();
    let (h1, h2) = (1e-5, 1e-4);
    let floor = 1e-2;
    let (mut worst1, mut worst2) = (0.0f64, 0.0f64);
    for probe in 0..100 {
        let rho = rng.random_range(0.05..0.95);
        let x = rng.random_range(0.0..1.0);
        let t = rng.random_range(0.05..0.95);
        let d = score.eval_with_derivatives(rho, x, t);
        let s = |r: f64, tt: f64| score.value(r, x, tt);
        let s_rho = |r: f64| score.eval_with_derivatives(r, x, t).s_rho;
        worst1 = worst1
            .max(rel((s(rho + h1, t) - s(rho - h1, t)) / (2.0 * h1), d.s_rho, floor))
            .max(rel((s(rho, t + h1) - s(rho, t - h1)) / (2.0 * h1), d.s_t, floor));
        worst2 = worst2.max(rel((s_rho(rho + h2) - s_rho(rho - h2)) / (2.0 * h2), d.s_rho2, floor));
        let closure = &closures[probe % closures.len()];
        let v = |r: f64| closed_velocity(&score, closure, &traffic, r, x, t);
        let jet = v(rho);
        worst1 = worst1.max(rel((v(rho + h1)[0] - v(rho - h1)[0]) / (2.0 * h1), jet[1], floor));
        worst2 = worst2.max(rel((v(rho + h2)[1] - v(rho - h2)[1]) / (2.0 * h2), jet[2], floor));
    }
    outcome(
        worst1 <= 1e-5 && worst2 <= 1e-4,
        format!("worst relative error: first order {worst1:.2e} (limit 1e-5), second order {worst2:.2e} (limit 1e-4)"),
    )
}

// 5 ------------------------------------------------------------------------

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_5() -> Outcome {
    // Gaussian solution of ∂_t p = ½ c ∂²p: variance v0 + c t.
    let c = 0.02;
    let model = constant_sigma_model(c, 1.0);
    let (m, v0) = (0.5, 0.004);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rho = rng.random_range(0.2..0.8);
        let t = rng.random_range(0.01..1.0);
        let var = v0 + c * t;
        let d = ScoreDerivatives {
            s: -(rho - m) / var,
            s_rho: -1.0 / var,
            s_rho2: 0.0,
            s_t: (rho - m) * c / (var * var),
        };
        worst = worst.max(residual_value(&d, [0.0; 3], model.diffusion_jet(rho, 0.5)).abs());
    }

    // Tabulated scores of the homogeneous quadratic-noise solution.
    let homogeneous = TrafficModel::new(
        greenshields(),
        quadratic_noise(1.0),
        1.0,
        1.0,
        InitialProfile::Constant(0.5),
        0.0,
    )
    .unwrap();
    let t_probe = 0.05;
    let medians: Vec<f64> = [100, 200, 400]
        .into_iter()
        .map(|n| {
            let mesh = DensityMesh::new(n, 1.0).unwrap();
            let steps = (t_probe / (0.5 * parabolic_limit(&homogeneous, &mesh, 0.5))).ceil() as usize;
            let dt = t_probe / steps as f64;
            let p0 = mollified_delta(&mesh, 0.5, 0.05).unwrap();
            let before = advance(&homogeneous, &mesh, &p0, 0.0, t_probe - dt, dt);
            let settings = FpeSettings {
                t_start: t_probe - dt,
                t_end: t_probe + dt,
                dt,
                store_every: 1,
            };
            let g = solve_fpe(&homogeneous, &Closure::Zero, 0.5, &mesh, settings, &before).unwrap();
            let r = grid_residuals(&g, &Closure::Zero, &homogeneous, 1, 1e-3).unwrap();
            // Fixed collocation points across meshes, linear in the cell values.
            let at = |rho: f64| {
                let u = rho / mesh.h - 0.5;
                let i = u.floor() as usize;
                let w = u - i as f64;
                ((1.0 - w) * r[i].unwrap() + w * r[i + 1].unwrap()).abs()
            };
            median((0..=200).map(|j| at(0.3 + 0.4 * j as f64 / 200.0)).collect())
        })
        .collect();
    let ratios: Vec<f64> = medians.windows(2).map(|w| w[0] / w[1]).collect();
    let passed = worst <= 1e-10 && ratios.iter().all(|&q| q >= 4.0);
    outcome(
        passed,
        format!(
            "Gaussian max |R| = {worst:.1e} (limit 1e-10); tabulated medians {} on [0.3, 0.7] at n = 100, 200, 400, ratios {ratios:.2?} (need >= 4)",
            sci(&medians)
        ),
    )
}

// 6 ------------------------------------------------------------------------

fn inverse_normal(u: f64) -> f64 {
    let phi = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
    slwr_core::math::bisect(|z| phi(z) - u, -10.0, 10.0, 1e-14)
}

fn criterion_6() -> Outcome {
    let (mu, sd) = (0.5, 0.05);
    let (x, t) = (0.5, 0.5);
    let n = 200;
    // Stratified draws: the Gaussian quantiles at (i + ½)/n.
    let records: Vec<_> = (0..n)
        .map(|i| (x, t, ObservationKind::Density, mu + sd * inverse_normal((i as f64 + 0.5) / n as f64)))
        .collect();
    let obs = ObservationSet::from_records(&records, &greenshields()).unwrap();
    let traffic = TrafficModel::new(
        greenshields(),
        quadratic_noise(0.2),
        1.0,
        1.0,
        InitialProfile::Constant(0.5),
        0.0,
    )
    .unwrap();
    let mut config = TrainConfig::defaults_for(1.0);
    config.lambda = 0.0;
    config.lambda_bc = 0.0;
    config.closure_kind = ClosureKind::Zero;
    config.dsm_scales = vec![0.05];
    config.epochs = 3000;
    config.finetune_epochs = 300;
    config.seed = 6;
    let (models, _) = train(&obs, &traffic, &config).unwrap();

    // Minimiser of the weighted DSM objective: the weighted mixture of the
    // Gaussian scores convolved with each scale.
    let weights = config.dsm_weights();
    let analytic = |rho: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, w) in config.dsm_scales.iter().zip(&weights) {
            let var = sd * sd + s * s;
            let dens = (-(rho - mu).powi(2) / (2.0 * var)).exp() / var.sqrt();
            num += w * dens * (-(rho - mu) / var);
            den += w * dens;
        }
        num / den
    };
    let probes: Vec<f64> = (0..=200).map(|i| mu - 2.0 * sd + 4.0 * sd * i as f64 / 200.0).collect();
    let magnitude = probes.iter().map(|&r| analytic(r).abs()).fold(0.0, f64::max);
    let rmse = (probes
        .iter()
        .map(|&r| (models.score.value(r, x, t) - analytic(r)).powi(2))
        .sum::<f64>()
        / probes.len() as f64)
        .sqrt();
    outcome(
        rmse <= 0.1 * magnitude,
        format!("RMSE {rmse:.3} over mu +/- 2 sd (limit {:.3} = 10% of band magnitude {magnitude:.2})", 0.1 * magnitude),
    )
}

// 7 ------------------------------------------------------------------------

fn total_variation(grid: &DensityGrid, k: usize, density: impl Fn(f64) -> f64) -> f64 {
    let mesh = &grid.mesh;
    0.5 * (0..mesh.n_cells)
        .map(|i| (density(mesh.center(i)) - grid.p[k][i]).abs() * mesh.h)
        .sum::<f64>()
}

fn criterion_7() -> Outcome {
    let c = 0.02;
    let horizon = 1.0;
    let mut traffic = constant_sigma_model(c, horizon);
    traffic.initial = InitialProfile::Constant(0.5);
    let mut config = TrainConfig::defaults_for(1.0);
    config.closure_kind = ClosureKind::Zero;
    config.score_arch = Architecture {
        depth: 3,
        width: 32,
        levels: 4,
    };
    config.dsm_scales = vec![0.02, 0.01, 0.005];
    // Joint training first collapses onto the flat score s = 0, which has a
    // near-zero residual, and only leaves it after a few thousand epochs.
    config.epochs = 20_000;
    config.finetune_epochs = 200;
    config.seed = 7;
    // A wide initial bump keeps the early-time score within reach of a small
    // network; at 0.02 the earliest probe stays around TV 0.07.
    config.mollifier = 0.1;

    // FPE reference from the same mollified delta the boundary term uses.
    let mesh = DensityMesh::new(200, 1.0).unwrap();
    let dt = 0.5 * parabolic_limit(&traffic, &mesh, 0.5);
    let settings = FpeSettings {
        t_start: 0.0,
        t_end: horizon,
        dt,
        store_every: 1,
    };
    let init = mollified_delta(&mesh, 0.5, config.mollifier).unwrap();
    let reference = solve_fpe(&traffic, &Closure::Zero, 0.5, &mesh, settings, &init).unwrap();

    // Observations: particles drawn from the reference at eight times and
    // scattered uniformly in x (the toy is spatially homogeneous).
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut records = Vec::new();
    for j in 1..=8 {
        let t = horizon * j as f64 / 8.0;
        let k = reference.time_index(t).unwrap_or_else(|| {
            reference
                .times
                .iter()
                .position(|&s| s >= t)
                .unwrap_or(reference.times.len() - 1)
        });
        let draws = sample_particles(&reference, k, 250, 700 + j).unwrap();
        for rho in draws.positions {
            records.push((rng.random_range(0.0..1.0), reference.times[k], ObservationKind::Density, rho));
        }
    }
    let obs = ObservationSet::from_records(&records, &traffic.flux).unwrap();
    let (models, _) = train(&obs, &traffic, &config).unwrap();

    let mut tvs = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        let k = reference
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .unwrap()
            .0;
        let tk = reference.times[k];
        let d = recover_density(&models.score.at(0.5), 1.0, 0.5, tk, 0.5, 64).unwrap();
        tvs.push(total_variation(&reference, k, |r| d.density_at(r)));
    }
    outcome(
        tvs.iter().all(|&v| v <= 0.05),
        format!("TV at t = 0.25, 0.5, 1: {tvs:.4?} (limit 0.05)"),
    )
}

// 8 ------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let mut failures = Vec::new();
    let gauss = FnScore {
        f: |r: f64, _t: f64| -(r - 0.4) / 0.01,
        rho_max: 1.0,
        t_range: (0.0, 1.0),
    };
    let g = recover_density(&gauss, 1.0, 0.5, 0.5, 0.5, 64).unwrap();
    let norm = (g.node_mass() - 1.0).abs();
    if norm > 1e-8 {
        failures.push(format!("normalisation {norm:.1e}"));
    }
    let uniform = FnScore {
        f: |_r: f64, _t: f64| 0.0,
        rho_max: 1.0,
        t_range: (0.0, 1.0),
    };
    let u = recover_density(&uniform, 1.0, 0.5, 0.5, 0.5, 64).unwrap();
    let s = summary_stats(&u);
    let stat_err = [
        (s.mean - 0.5).abs(),
        (s.std - 1.0 / 12f64.sqrt()).abs(),
        (s.ci_lo - 0.025).abs(),
        (s.ci_hi - 0.975).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if stat_err > 1e-3 {
        failures.push(format!("uniform stats error {stat_err:.1e}"));
    }
    let risk_err = (congestion_risk(&u, 0.7).unwrap() - 0.3).abs();
    if risk_err > 1e-6 {
        failures.push(format!("congestion risk error {risk_err:.1e}"));
    }
    let flow = flow_pushforward(&u, &greenshields(), 256).unwrap();
    let shape_err = flow
        .q_nodes
        .iter()
        .zip(&flow.p_q)
        .filter(|(q, _)| **q <= 0.24)
        .map(|(q, p)| (p - 2.0 / (1.0 - 4.0 * q).sqrt()).abs() / (2.0 / (1.0 - 4.0 * q).sqrt()))
        .fold(0.0, f64::max);
    let mass_err = (flow.mass() - 1.0).abs();
    if shape_err > 1e-4 || mass_err > 1e-4 {
        failures.push(format!("pushforward shape {shape_err:.1e}, mass {mass_err:.1e}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "normalisation {norm:.1e}, stats {stat_err:.1e}, risk {risk_err:.1e}, pushforward shape {shape_err:.1e} mass {mass_err:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn shock_speed(left: f64, right: f64) -> (f64, f64) {
    let model = TrafficModel::new(
        greenshields(),
        NoiseStructure::none(),
        1.0,
        1.0,
        InitialProfile::Step {
            left,
            right,
            position: 0.3,
        },
        0.0,
    )
    .unwrap();
    let grid = SpaceTimeGrid::new(&model, 512, 1024, Boundary::Dirichlet { left, right }).unwrap();
    let ens = deterministic_lwr(&model, &grid, 64).unwrap();
    let mid = 0.5 * (left + right);
    let front = |k: usize| {
        let row = ens.snapshot(0, k);
        let i = row.iter().position(|&v| v >= mid).unwrap();
        // Linear interpolation of the crossing between cells i − 1 and i.
        let w = (mid - row[i - 1]) / (row[i] - row[i - 1]);
        ens.cell_center(i - 1) + w * grid.dx
    };
    let (k0, k1) = (4, ens.n_times() - 1);
    let measured = (front(k1) - front(k0)) / (ens.times[k1] - ens.times[k0]);
    let rh = (model.flux.f(right) - model.flux.f(left)) / (right - left);
    (measured, rh)
}

fn criterion_9() -> Outcome {
    let model = TrafficModel::new(
        greenshields(),
        NoiseStructure::none(),
        1.0,
        0.5,
        InitialProfile::Sine {
            mean: 0.4,
            amplitude: 0.1,
            wavenumber: 1.0,
        },
        0.0,
    )
    .unwrap();
    let grid = SpaceTimeGrid::new(&model, 64, 128, Boundary::Periodic).unwrap();
    let ens = simulate_ensemble(&model, &grid, 4, 9, 4).unwrap();
    let det = deterministic_lwr(&model, &grid, 4).unwrap();
    let identical = (0..ens.n_real).all(|r| {
        (0..ens.n_times()).all(|k| {
            ens.snapshot(r, k)
                .iter()
                .zip(det.snapshot(0, k))
                .all(|(a, b)| a.to_bits() == b.to_bits())
        })
    });
    let (moving, rh_moving) = shock_speed(0.2, 0.6);
    let (standing, rh_standing) = shock_speed(0.2, 0.8);
    let moving_ok = ((moving - rh_moving) / rh_moving).abs() <= 0.05;
    // Zero Rankine–Hugoniot speed: 5% of the characteristic speed instead.
    let standing_ok = (standing - rh_standing).abs() <= 0.05 * greenshields().df(0.2).abs();
    outcome(
        identical && moving_ok && standing_ok,
        format!(
            "sigma = 0 bit-identical: {identical}; shock 0.2->0.6 speed {moving:.4} vs {rh_moving:.4}; shock 0.2->0.8 speed {standing:.2e} vs {rh_standing:.1}"
        ),
    )
}

// 10 -----------------------------------------------------------------------

/// Runs the built binary with its output captured.
fn run(args: &[&str]) -> i32 {
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_slwr")).args(args).output().unwrap();
    o.status.code().unwrap_or(-1)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.json");
    let train_cfg = p("train.json");
    std::fs::write(
        &train_cfg,
        r#"{"epochs": 20, "finetune_epochs": 5, "depth": 2, "width": 16, "batch_collocation": 64}"#,
    )
    .unwrap();
    let obs = p("obs.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut text = String::from("x,t,kind,value\n");
    for _ in 0..60 {
        let rho: f64 = rng.random_range(0.3..0.5);
        text += &format!("{},{},rho,{}\n", rng.random_range(0.0..1.0), rng.random_range(0.0..0.5), rho);
    }
    std::fs::write(&obs, text).unwrap();

    let mut mismatches = Vec::new();
    let mut failures = Vec::new();
    for threads in ["1", "3"] {
        let suffix = |name: &str| p(&format!("{threads}_{name}"));
        let steps: Vec<(&str, Vec<String>)> = vec![
            (
                "simulate",
                vec!["simulate", "--config", config, "--nx", "32", "--nt", "64", "--nreal", "40", "--seed", "5",
                     "--store-every", "8", "--threads", threads, "--out", &suffix("ens.bin")]
                .into_iter().map(String::from).collect(),
            ),
            (
                "solve-fpe",
                vec!["solve-fpe", "--config", config, "--closure", &format!("oracle:{}", suffix("ens.bin")),
                     "--bins", "10", "--x", "0.5", "--ncells", "100", "--dt", "0.002", "--tmax", "0.5",
                     "--store-every", "10", "--out", &suffix("pgrid.csv")]
                .into_iter().map(String::from).collect(),
            ),
            (
                "pfode",
                vec!["pfode", "--pgrid", &suffix("pgrid.csv"), "--config", config, "--x", "0.5", "--t0", "0.02",
                     "--t1", "0.5", "--nparticles", "300", "--seed", "8", "--threads", threads,
                     "--out", &suffix("particles.csv")]
                .into_iter().map(String::from).collect(),
            ),
            (
                "train",
                vec!["train", "--config", config, "--obs", &obs, "--train-config", &train_cfg, "--seed", "3",
                     "--out", &suffix("model.ckpt"), "--log", &suffix("train.csv")]
                .into_iter().map(String::from).collect(),
            ),
            (
                "infer",
                vec!["infer", "--ckpt", &suffix("model.ckpt"), "--config", config, "--x", "0.5", "--t", "0.25",
                     "--rho-c", "0.5", "--out", &suffix("summary.json"), "--flow", &suffix("flow.csv")]
                .into_iter().map(String::from).collect(),
            ),
            (
                "triangle",
                vec!["triangle", "--config", config, "--nreal", "200", "--seed", "4", "--nx", "32", "--nt", "64",
                     "--nparticles", "200", "--ncells", "200", "--fpe-store-every", "4", "--threads", threads,
                     "--out", &suffix("triangle.json")]
                .into_iter().map(String::from).collect(),
            ),
        ];
        for (name, args) in &steps {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let code = run(&refs);
            // The undersized triangle is expected to flag itself advisory.
            if code != 0 && !(*name == "triangle" && code == 1) {
                failures.push(format!("{name} exited {code}"));
            }
        }
    }
    for name in [
        "ens.bin", "pgrid.csv", "particles.csv", "model.ckpt", "train.csv", "summary.json", "flow.csv", "triangle.json",
    ] {
        let a = std::fs::read(p(&format!("1_{name}"))).unwrap_or_default();
        let b = std::fs::read(p(&format!("3_{name}"))).unwrap_or_default();
        if a.is_empty() || a != b {
            mismatches.push(name);
        }
    }
    outcome(
        failures.is_empty() && mismatches.is_empty(),
        format!(
            "simulate, solve-fpe, pfode, train, infer, triangle rerun with 1 and 3 threads: {}",
            if failures.is_empty() && mismatches.is_empty() {
                "all artifacts byte-identical".to_string()
            } else {
                format!("failures {failures:?}, differing artifacts {mismatches:?}")
            }
        ),
    )
}

// -------------------------------------------------------------------------

fn selected(n: usize) -> bool {
    match std::env::var("SLWR_CRITERIA") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(n)),
        Err(_) => true,
    }
}

#[test]
fn acceptance() {
    let mut report = std::io::stderr();
    let mut all = true;
    let mut emit = |n: usize, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        if !selected(n) {
            return;
        }
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = took <= limit;
        let passed = o.passed && in_time;
        all &= passed;
        let _ = writeln!(
            report,
            "criterion {n:>2}: {} | {} | {:.1} s (budget {} s)",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    emit(1, Duration::from_secs(10), &mut criterion_1);
    let mut triangle = None;
    emit(2, Duration::from_secs(300), &mut || {
        let r = triangle_report();
        let o = criterion_2(&r);
        triangle = Some(r);
        o
    });
    emit(3, Duration::from_secs(60), &mut || match &triangle {
        Some(r) => criterion_3(r),
        None => criterion_3(&triangle_report()),
    });
    emit(4, Duration::from_secs(5), &mut criterion_4);
    emit(5, Duration::from_secs(30), &mut criterion_5);
    emit(6, Duration::from_secs(120), &mut criterion_6);
    emit(7, Duration::from_secs(600), &mut criterion_7);
    emit(8, Duration::from_secs(60), &mut criterion_8);
    emit(9, Duration::from_secs(60), &mut criterion_9);
    emit(10, Duration::from_secs(300), &mut criterion_10);
    assert!(all, "at least one acceptance criterion failed");
}
