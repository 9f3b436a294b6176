//! The Monte Carlo / Fokker–Planck / probability-flow cross-check at one
//! probe position.

use rayon::ThreadPool;
use serde::Serialize;
use slwr_core::fpe::{mollified_delta, parabolic_limit, solve_fpe, Closure, DensityGrid, DensityMesh, FpeSettings, TabulatedDrift};
use slwr_core::model::TrafficModel;
use slwr_core::pfode::{assemble_velocity, sample_particles, TabulatedScore};
use slwr_core::spde::{estimate_conditional_drift, Boundary, SpaceTimeGrid};
use slwr_core::stats::{ks_samples, w1_standard_error, wasserstein1_samples, PiecewiseLinearCdf};
use slwr_core::{Error, Result};

use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriangleSettings {
    pub nx: usize,
    pub nt: usize,
    pub store_every: usize,
    pub n_real: usize,
    pub seed: u64,
    pub drift_bins: usize,
    pub n_cells: usize,
    pub n_particles: usize,
    /// Particles start this many FPE steps after the initial time.
    pub t0_steps: usize,
    /// Standard deviation of the mollified initial delta, relative to `ρ_max`
    /// (raised to two cells when the mesh is coarser).
    pub mollifier: f64,
    /// FPE steps between stored densities; the particle step is the stored
    /// spacing.
    pub fpe_store_every: usize,
}

impl TriangleSettings {
    pub fn new(n_real: usize, seed: u64) -> Self {
        TriangleSettings {
            nx: 64,
            nt: 128,
            store_every: 4,
            n_real,
            seed,
            drift_bins: 50,
            n_cells: 1600,
            n_particles: 10_000,
            t0_steps: 10,
            mollifier: 0.01,
            fpe_store_every: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriangleReport {
    pub x: f64,
    pub t: f64,
    pub n_real: usize,
    pub w1: f64,
    pub w1_threshold: f64,
    pub w1_standard_error: f64,
    pub ks: f64,
    pub ks_threshold: f64,
    pub t0: f64,
    pub dt_ode: f64,
    pub delta_shortcut: bool,
    pub notes: Vec<String>,
    pub w1_pass: bool,
    pub ks_pass: bool,
    /// Set when Monte Carlo error alone could exceed a quarter of the W1
    /// threshold; the verdict is then advisory.
    pub advisory: bool,
    pub passed: bool,
}

pub const KS_THRESHOLD: f64 = 0.03;

pub fn w1_threshold(rho_max: f64) -> f64 {
    0.02 * rho_max
}

pub fn run_triangle(pool: &ThreadPool, model: &TrafficModel, boundary: Boundary, s: TriangleSettings) -> Result<TriangleReport> {
    let grid = SpaceTimeGrid::new(model, s.nx, s.nt, boundary)?;
    let xi = s.nx / 2;
    let x = grid.cell_center(xi);
    let t_end = model.horizon;
    let rho_max = model.rho_max();
    let w1_thr = w1_threshold(rho_max);

    if model.noise.is_silent() {
        // Every realisation follows the deterministic path, so all three
        // marginals are the same point mass.
        return Ok(TriangleReport {
            x,
            t: t_end,
            n_real: s.n_real,
            w1: 0.0,
            w1_threshold: w1_thr,
            w1_standard_error: 0.0,
            ks: 0.0,
            ks_threshold: KS_THRESHOLD,
            t0: 0.0,
            dt_ode: 0.0,
            delta_shortcut: true,
            notes: vec!["sigma = 0: marginals are point masses on the deterministic solution".into()],
            w1_pass: true,
            ks_pass: true,
            advisory: false,
            passed: true,
        });
    }

    let ens = parallel::simulate_local_columns(pool, model, &grid, s.n_real, s.seed, s.store_every, xi)?;
    let oracles = (0..ens.n_times())
        .map(|k| estimate_conditional_drift(&ens, model, 1, k, s.drift_bins))
        .collect::<Result<Vec<_>>>()?;
    let drift = TabulatedDrift::from_oracles(&oracles)?;
    let max_b = drift
        .tables
        .iter()
        .flatten()
        .fold(0.0f64, |m, &(_, b)| m.max(b.abs()));
    let mut notes = Vec::new();
    let empty: usize = oracles.iter().map(|o| o.b_hat.iter().filter(|b| b.is_none()).count()).sum();
    if empty > 0 {
        notes.push(format!("{empty} empty drift bins filled by interpolation"));
    }
    let closure = Closure::OracleTabulated(drift);

    let mesh = DensityMesh::new(s.n_cells, rho_max)?;
    let mut dt = 0.5 * parabolic_limit(model, &mesh, x);
    if max_b > 0.0 {
        dt = dt.min(0.4 * mesh.h / max_b);
    }
    let eps = (s.mollifier * rho_max).max(2.0 * mesh.h);
    let init = mollified_delta(&mesh, model.initial_density(x), eps)?;
    let fpe = solve_fpe(
        model,
        &closure,
        x,
        &mesh,
        FpeSettings {
            t_start: 0.0,
            t_end,
            dt,
            store_every: s.fpe_store_every,
        },
        &init,
    )?;
    let dt_ode = fpe.times[1] - fpe.times[0];
    let last = fpe.times.len() - 1;
    let cdf_end = cell_cdf(&fpe, last)?;

    let samples = ens.samples(1, ens.n_times() - 1)?;
    let w1 = wasserstein1_samples(&samples, &cdf_end)?;
    let se = w1_standard_error(&cdf_end, s.n_real);
    let advisory = se > 0.25 * w1_thr;
    if advisory {
        notes.push(format!(
            "W1 standard error {se:.3e} exceeds a quarter of the threshold; increase nreal"
        ));
    }

    let k0 = s.t0_steps.div_ceil(s.fpe_store_every.max(1)).min(last);
    let score = TabulatedScore::from_grid(&fpe)?;
    let field = assemble_velocity(&closure, model, &score, x);
    let start = sample_particles(&fpe, k0, s.n_particles, s.seed)?;
    let end = parallel::transport_particles(pool, &field, &start, t_end, dt_ode)?;
    let ks = ks_samples(&end.positions, &cdf_end)?;
    if score.extrapolations() > 0 {
        notes.push(format!("{} score queries used constant extension", score.extrapolations()));
    }

    let w1_pass = w1 <= w1_thr;
    let ks_pass = ks <= KS_THRESHOLD;
    Ok(TriangleReport {
        x,
        t: t_end,
        n_real: s.n_real,
        w1,
        w1_threshold: w1_thr,
        w1_standard_error: se,
        ks,
        ks_threshold: KS_THRESHOLD,
        t0: fpe.times[k0],
        dt_ode,
        delta_shortcut: false,
        notes,
        w1_pass,
        ks_pass,
        advisory,
        passed: w1_pass && ks_pass && !advisory,
    })
}

pub fn cell_cdf(grid: &DensityGrid, k: usize) -> Result<PiecewiseLinearCdf> {
    let p = grid.p.get(k).ok_or(Error::IndexOutOfRange {
        what: "t_index",
        index: k,
        len: grid.p.len(),
    })?;
    PiecewiseLinearCdf::from_cell_density(&grid.mesh.edges(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use slwr_core::model::{FluxFunction, InitialProfile, NoiseMode, NoiseStructure, SpatialBasis};

    fn model(alpha: f64) -> TrafficModel {
        let flux = FluxFunction::greenshields(1.0, 1.0).unwrap();
        let noise = if alpha > 0.0 {
            NoiseStructure::Modes(vec![NoiseMode::new(alpha, vec![1.0], SpatialBasis::Constant, 1.0).unwrap()])
        } else {
            NoiseStructure::none()
        };
        let init = InitialProfile::Sine {
            mean: 0.4,
            amplitude: 0.1,
            wavenumber: 1.0,
        };
        TrafficModel::new(flux, noise, 1.0, 0.5, init, 0.0).unwrap()
    }

    #[test]
    fn small_ensemble_is_flagged_advisory() {
        let pool = parallel::pool(Some(2)).unwrap();
        let mut s = TriangleSettings::new(10, 3);
        s.n_particles = 500;
        let r = run_triangle(&pool, &model(0.2), Boundary::Periodic, s).unwrap();
        assert!(r.advisory);
        assert!(!r.passed);
    }

    #[test]
    fn silent_noise_takes_the_delta_shortcut() {
        let pool = parallel::pool(Some(1)).unwrap();
        let r = run_triangle(&pool, &model(0.0), Boundary::Periodic, TriangleSettings::new(100, 1)).unwrap();
        assert!(r.delta_shortcut && r.passed);
        assert_eq!(r.w1, 0.0);
    }
}
