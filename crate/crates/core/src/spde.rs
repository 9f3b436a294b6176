//! Monte-Carlo simulation of the SLWR SPDE: Euler–Maruyama in time, Rusanov
//! flux in space, one shared Brownian increment per noise mode and step.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;
use crate::model::{NoiseStructure, TrafficModel};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    Periodic,
    /// Fixed ghost states outside the domain.
    Dirichlet { left: f64, right: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceTimeGrid {
    pub nx: usize,
    pub dx: f64,
    pub nt: usize,
    pub dt: f64,
    pub boundary: Boundary,
}

impl SpaceTimeGrid {
    /// Uniform grid over the model's domain, checked against the CFL bound
    /// (0.9) and, with viscosity, the parabolic bound (0.4).
    pub fn new(model: &TrafficModel, nx: usize, nt: usize, boundary: Boundary) -> Result<Self> {
        if nx < 3 || nt == 0 {
            return Err(Error::config("need nx >= 3 and nt >= 1"));
        }
        let dx = model.length / nx as f64;
        let dt = model.horizon / nt as f64;
        let speed = model.flux.max_abs_prime();
        let cfl_limit = 0.9 * dx / speed;
        if dt > cfl_limit {
            return Err(Error::StabilityBound {
                bound: "CFL dt*max|f'|/dx <= 0.9",
                limit: cfl_limit,
                dt,
            });
        }
        if model.viscosity > 0.0 {
            let limit = 0.4 * dx * dx / model.viscosity;
            if dt > limit {
                return Err(Error::StabilityBound {
                    bound: "viscous dt*eps/dx^2 <= 0.4",
                    limit,
                    dt,
                });
            }
        }
        if let Boundary::Dirichlet { left, right } = boundary {
            for v in [left, right] {
                Error::check_range("boundary density", v, 0.0, model.rho_max())?;
            }
        }
        Ok(SpaceTimeGrid {
            nx,
            dx,
            nt,
            dt,
            boundary,
        })
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }
}

/// Stored Monte-Carlo snapshots, realisation-major: `data[(r · n_t + k) · nx + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub nx: usize,
    pub dx: f64,
    pub boundary: Boundary,
    pub rho_max: f64,
    pub n_real: usize,
    pub seed: u64,
    /// Time stamps of the stored snapshots.
    pub times: Vec<f64>,
    pub data: Vec<f64>,
}

impl Ensemble {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Uniform spacing between stored snapshots (0 for a single snapshot).
    pub fn snapshot_interval(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn snapshot(&self, r: usize, k: usize) -> &[f64] {
        let start = (r * self.times.len() + k) * self.nx;
        &self.data[start..start + self.nx]
    }

    pub fn value(&self, r: usize, k: usize, i: usize) -> f64 {
        self.data[(r * self.times.len() + k) * self.nx + i]
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    fn check_indices(&self, x_index: usize, t_index: usize) -> Result<()> {
        if self.n_real == 0 {
            return Err(Error::InsufficientData("empty ensemble".into()));
        }
        if x_index >= self.nx {
            return Err(Error::IndexOutOfRange {
                what: "x_index",
                index: x_index,
                len: self.nx,
            });
        }
        if t_index >= self.times.len() {
            return Err(Error::IndexOutOfRange {
                what: "t_index",
                index: t_index,
                len: self.times.len(),
            });
        }
        Ok(())
    }

    /// Central difference of `ρ` at cell `i` for realisation `r`.
    fn gradient(&self, r: usize, k: usize, i: usize) -> Result<f64> {
        let row = self.snapshot(r, k);
        let (lo, hi) = match self.boundary {
            Boundary::Periodic => (row[(i + self.nx - 1) % self.nx], row[(i + 1) % self.nx]),
            Boundary::Dirichlet { .. } => {
                if i == 0 || i + 1 >= self.nx {
                    return Err(Error::InsufficientData(
                        "fewer than 2 spatial neighbours for the gradient".into(),
                    ));
                }
                (row[i - 1], row[i + 1])
            }
        };
        Ok((hi - lo) / (2.0 * self.dx))
    }

    /// Ensemble mean of `∂_x ρ` at cell `i` for every stored time.
    pub fn mean_gradient(&self, x_index: usize) -> Result<Vec<f64>> {
        self.check_indices(x_index, 0)?;
        (0..self.times.len())
            .map(|k| {
                let mut s = 0.0;
                for r in 0..self.n_real {
                    s += self.gradient(r, k, x_index)?;
                }
                Ok(s / self.n_real as f64)
            })
            .collect()
    }

    /// One-point samples `ρ(x_i, t_k)` across realisations.
    pub fn samples(&self, x_index: usize, t_index: usize) -> Result<Vec<f64>> {
        self.check_indices(x_index, t_index)?;
        Ok((0..self.n_real)
            .map(|r| self.value(r, t_index, x_index))
            .collect())
    }
}

/// Histogram estimate of the one-point marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMarginal {
    pub bin_edges: Vec<f64>,
    pub mass: Vec<f64>,
    pub x: f64,
    pub t: f64,
}

/// Binned estimate of the conditional drift `E[β | Y = ρ̂]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleClosure {
    pub bin_centers: Vec<f64>,
    /// `None` marks bins with no samples.
    pub b_hat: Vec<Option<f64>>,
    pub std_err: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    pub x: f64,
    pub t: f64,
}

fn bin_of(value: f64, rho_max: f64, n_bins: usize) -> usize {
    let b = math::floor(value / rho_max * n_bins as f64);
    if b < 0.0 {
        0
    } else {
        (b as usize).min(n_bins - 1)
    }
}

pub fn empirical_marginal(
    ens: &Ensemble,
    x_index: usize,
    t_index: usize,
    n_bins: usize,
) -> Result<EmpiricalMarginal> {
    ens.check_indices(x_index, t_index)?;
    if n_bins == 0 {
        return Err(Error::config("n_bins must be positive"));
    }
    let mut mass = alloc::vec![0.0; n_bins];
    for r in 0..ens.n_real {
        mass[bin_of(ens.value(r, t_index, x_index), ens.rho_max, n_bins)] += 1.0;
    }
    mass.iter_mut().for_each(|m| *m /= ens.n_real as f64);
    Ok(EmpiricalMarginal {
        bin_edges: (0..=n_bins)
            .map(|b| ens.rho_max * b as f64 / n_bins as f64)
            .collect(),
        mass,
        x: ens.cell_center(x_index),
        t: ens.times[t_index],
    })
}

/// Bins realisations by `ρ(x, t)` and averages the pathwise drift
/// `β = −f′(ρ) ∂_x ρ` within each bin.
pub fn estimate_conditional_drift(
    ens: &Ensemble,
    model: &TrafficModel,
    x_index: usize,
    t_index: usize,
    n_bins: usize,
) -> Result<OracleClosure> {
    ens.check_indices(x_index, t_index)?;
    if n_bins == 0 {
        return Err(Error::config("n_bins must be positive"));
    }
    let mut sum = alloc::vec![0.0; n_bins];
    let mut sum_sq = alloc::vec![0.0; n_bins];
    let mut counts = alloc::vec![0usize; n_bins];
    for r in 0..ens.n_real {
        let rho = ens.value(r, t_index, x_index);
        let beta = -model.flux.df(rho) * ens.gradient(r, t_index, x_index)?;
        let b = bin_of(rho, ens.rho_max, n_bins);
        sum[b] += beta;
        sum_sq[b] += beta * beta;
        counts[b] += 1;
    }
    let mut b_hat = Vec::with_capacity(n_bins);
    let mut std_err = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let n = counts[b] as f64;
        if counts[b] == 0 {
            b_hat.push(None);
            std_err.push(None);
            continue;
        }
        let mean = sum[b] / n;
        b_hat.push(Some(mean));
        std_err.push(if counts[b] > 1 {
            let var = ((sum_sq[b] - n * mean * mean) / (n - 1.0)).max(0.0);
            Some(math::sqrt(var / n))
        } else {
            None
        });
    }
    Ok(OracleClosure {
        bin_centers: (0..n_bins)
            .map(|b| ens.rho_max * (b as f64 + 0.5) / n_bins as f64)
            .collect(),
        b_hat,
        std_err,
        counts,
        x: ens.cell_center(x_index),
        t: ens.times[t_index],
    })
}

/// Per-cell noise weights `σ_k(·) e_k(x_i)` split into the density factor
/// and the precomputed spatial factor.
struct NoiseTable<'a> {
    model: &'a TrafficModel,
    spatial: Vec<Vec<f64>>,
}

impl<'a> NoiseTable<'a> {
    fn new(model: &'a TrafficModel, grid: &SpaceTimeGrid) -> Self {
        let spatial = match &model.noise {
            NoiseStructure::Modes(modes) => modes
                .iter()
                .map(|m| {
                    (0..grid.nx)
                        .map(|i| m.basis().eval(grid.cell_center(i), model.length))
                        .collect()
                })
                .collect(),
            NoiseStructure::ConstantDiffusion(_) => alloc::vec![alloc::vec![1.0; grid.nx]],
        };
        NoiseTable { model, spatial }
    }

    fn modes(&self) -> usize {
        self.spatial.len()
    }

    fn sigma(&self, k: usize, rho: f64) -> f64 {
        match &self.model.noise {
            NoiseStructure::Modes(modes) => modes[k].sigma(rho),
            NoiseStructure::ConstantDiffusion(c) => math::sqrt(*c),
        }
    }
}

fn reflect(rho: f64, rho_max: f64) -> f64 {
    let r = if rho < 0.0 {
        -rho
    } else if rho > rho_max {
        2.0 * rho_max - rho
    } else {
        rho
    };
    r.clamp(0.0, rho_max)
}

/// One Euler–Maruyama step; `increments` holds `ΔW^k` for every mode.
fn step(
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    noise: &NoiseTable<'_>,
    rho: &[f64],
    increments: &[f64],
    fluxes: &mut Vec<f64>,
    out: &mut [f64],
) {
    let nx = grid.nx;
    let ghost = |j: isize| -> f64 {
        match grid.boundary {
            Boundary::Periodic => rho[j.rem_euclid(nx as isize) as usize],
            Boundary::Dirichlet { left, right } => {
                if j < 0 {
                    left
                } else if j >= nx as isize {
                    right
                } else {
                    rho[j as usize]
                }
            }
        }
    };
    // fluxes[j] is the Rusanov flux at the left edge of cell j; fluxes[nx] at
    // the right edge of the last cell.
    fluxes.clear();
    for j in 0..=nx as isize {
        let a = ghost(j - 1);
        let b = ghost(j);
        let speed = model.flux.df(a).abs().max(model.flux.df(b).abs());
        fluxes.push(0.5 * (model.flux.f(a) + model.flux.f(b)) - 0.5 * speed * (b - a));
    }
    let ratio = grid.dt / grid.dx;
    let visc = model.viscosity * grid.dt / (grid.dx * grid.dx);
    for i in 0..nx {
        let mut v = rho[i] - ratio * (fluxes[i + 1] - fluxes[i]);
        if model.viscosity > 0.0 {
            let ii = i as isize;
            v += visc * (ghost(ii + 1) - 2.0 * rho[i] + ghost(ii - 1));
        }
        for k in 0..noise.modes() {
            v += noise.sigma(k, rho[i]) * noise.spatial[k][i] * increments[k];
        }
        out[i] = v;
    }
}

fn run(
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    store_every: usize,
    realisation: usize,
    mut draw: impl FnMut(&mut [f64]),
) -> Result<Vec<f64>> {
    let noise = NoiseTable::new(model, grid);
    let rho_max = model.rho_max();
    let mut rho: Vec<f64> = (0..grid.nx)
        .map(|i| model.initial_density(grid.cell_center(i)))
        .collect();
    let n_store = grid.nt / store_every + 1;
    let mut stored = Vec::with_capacity(n_store * grid.nx);
    stored.extend_from_slice(&rho);
    let mut next = alloc::vec![0.0; grid.nx];
    let mut fluxes = Vec::with_capacity(grid.nx + 1);
    let mut inc = alloc::vec![0.0; noise.modes()];
    for n in 1..=grid.nt {
        draw(&mut inc);
        step(model, grid, &noise, &rho, &inc, &mut fluxes, &mut next);
        for v in next.iter_mut() {
            if !v.is_finite() {
                return Err(Error::SimulationDiverged {
                    step: n,
                    realisation,
                });
            }
            *v = reflect(*v, rho_max);
        }
        core::mem::swap(&mut rho, &mut next);
        if n % store_every == 0 {
            stored.extend_from_slice(&rho);
        }
    }
    Ok(stored)
}

fn check_store(store_every: usize) -> Result<()> {
    if store_every == 0 {
        Err(Error::config("store_every must be positive"))
    } else {
        Ok(())
    }
}

fn require_valid(model: &TrafficModel) -> Result<()> {
    let report = model.validate_assumptions(64);
    if let Some(c) = report.fatal_failures().next() {
        return Err(Error::Config(alloc::format!(
            "model fails the {} check ({})",
            c.assumption.name(),
            c.detail
        )));
    }
    Ok(())
}

/// Counter-based generator for realisation `r` under master `seed`.
pub fn realisation_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Stored snapshots of a single realisation (time-major, `n_stored × nx`).
///
/// Each realisation owns its RNG stream, so any partition of the ensemble
/// over workers reproduces the serial result bit for bit.
pub fn simulate_realisation(
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    store_every: usize,
    seed: u64,
    r: usize,
) -> Result<Vec<f64>> {
    check_store(store_every)?;
    let mut rng = realisation_rng(seed, r);
    let sqrt_dt = math::sqrt(grid.dt);
    run(model, grid, store_every, r, |inc| {
        for w in inc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sqrt_dt;
        }
    })
}

/// Assembles an ensemble from per-realisation outputs of
/// [`simulate_realisation`], in realisation order.
pub fn assemble_ensemble(
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    store_every: usize,
    seed: u64,
    realisations: Vec<Vec<f64>>,
) -> Ensemble {
    let n_real = realisations.len();
    let mut data = Vec::with_capacity(realisations.iter().map(Vec::len).sum());
    for r in realisations {
        data.extend_from_slice(&r);
    }
    Ensemble {
        nx: grid.nx,
        dx: grid.dx,
        boundary: grid.boundary,
        rho_max: model.rho_max(),
        n_real,
        seed,
        times: (0..=grid.nt / store_every)
            .map(|k| (k * store_every) as f64 * grid.dt)
            .collect(),
        data,
    }
}

/// Serial ensemble simulation. Fatal assumption failures are refused.
pub fn simulate_ensemble(
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    n_real: usize,
    seed: u64,
    store_every: usize,
) -> Result<Ensemble> {
    require_valid(model)?;
    check_store(store_every)?;
    let runs = (0..n_real)
        .map(|r| simulate_realisation(model, grid, store_every, seed, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_ensemble(model, grid, store_every, seed, runs))
}

/// Noise-free reference path through the same step function, returned as a
/// one-realisation ensemble.
pub fn deterministic_lwr(model: &TrafficModel, grid: &SpaceTimeGrid, store_every: usize) -> Result<Ensemble> {
    check_store(store_every)?;
    let run = run(model, grid, store_every, 0, |inc| inc.iter_mut().for_each(|w| *w = 0.0))?;
    Ok(assemble_ensemble(model, grid, store_every, 0, alloc::vec![run]))
}

/// Validation gate shared with callers that simulate realisations directly.
pub fn check_simulable(model: &TrafficModel) -> Result<()> {
    require_valid(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FluxFunction, InitialProfile, NoiseMode, SpatialBasis};
    use alloc::vec;

    fn model(alpha: f64, initial: InitialProfile) -> TrafficModel {
        TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::Modes(vec![
                NoiseMode::new(alpha, vec![1.0], SpatialBasis::Constant, 1.0).unwrap()
            ]),
            1.0,
            0.2,
            initial,
            0.0,
        )
        .unwrap()
    }

    fn sine() -> InitialProfile {
        InitialProfile::Sine {
            mean: 0.4,
            amplitude: 0.1,
            wavenumber: 1.0,
        }
    }

    #[test]
    fn cfl_violation_is_a_configuration_error() {
        let m = model(0.2, sine());
        assert!(matches!(
            SpaceTimeGrid::new(&m, 100, 10, Boundary::Periodic),
            Err(Error::StabilityBound { .. })
        ));
    }

    #[test]
    fn zero_noise_collapses_to_deterministic_path() {
        let m = model(0.0, sine());
        let g = SpaceTimeGrid::new(&m, 32, 40, Boundary::Periodic).unwrap();
        let ens = simulate_ensemble(&m, &g, 5, 11, 4).unwrap();
        let det = deterministic_lwr(&m, &g, 4).unwrap();
        for r in 0..5 {
            for k in 0..ens.n_times() {
                let a = ens.snapshot(r, k);
                let b = det.snapshot(0, k);
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }

    #[test]
    fn constant_state_is_steady() {
        let m = model(0.0, InitialProfile::Constant(0.3));
        let g = SpaceTimeGrid::new(&m, 16, 20, Boundary::Periodic).unwrap();
        let det = deterministic_lwr(&m, &g, 20).unwrap();
        assert!(det.snapshot(0, 1).iter().all(|&v| v == 0.3));
    }

    #[test]
    fn periodic_mass_is_conserved() {
        let m = model(0.0, sine());
        let g = SpaceTimeGrid::new(&m, 64, 100, Boundary::Periodic).unwrap();
        let det = deterministic_lwr(&m, &g, 100).unwrap();
        let mass = |k: usize| det.snapshot(0, k).iter().sum::<f64>() * g.dx;
        assert!((mass(0) - mass(1)).abs() <= 1e-12);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let m = model(0.2, sine());
        let g = SpaceTimeGrid::new(&m, 16, 20, Boundary::Periodic).unwrap();
        let a = simulate_ensemble(&m, &g, 4, 99, 5).unwrap();
        let b = simulate_ensemble(&m, &g, 4, 99, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_ensemble(&m, &g, 4, 100, 5).unwrap();
        assert_ne!(a.data, c.data);
        assert!(a.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn marginal_of_degenerate_ensemble_is_one_bin() {
        let m = model(0.0, InitialProfile::Constant(0.45));
        let g = SpaceTimeGrid::new(&m, 8, 4, Boundary::Periodic).unwrap();
        let ens = simulate_ensemble(&m, &g, 10, 1, 1).unwrap();
        let marg = empirical_marginal(&ens, 3, 2, 10).unwrap();
        assert_eq!(marg.mass[4], 1.0);
        assert_eq!(marg.mass.iter().filter(|&&m| m > 0.0).count(), 1);
        assert_eq!(empirical_marginal(&ens, 3, 2, 1).unwrap().mass, vec![1.0]);
        assert!(matches!(
            empirical_marginal(&ens, 3, 99, 10),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn drift_on_linear_profile() {
        let xs: Vec<f64> = vec![0.0, 1.0];
        let m = TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::none(),
            1.0,
            0.1,
            InitialProfile::Table {
                xs,
                values: vec![0.2, 0.6],
            },
            0.0,
        )
        .unwrap();
        let g = SpaceTimeGrid::new(
            &m,
            20,
            10,
            Boundary::Dirichlet {
                left: 0.2,
                right: 0.6,
            },
        )
        .unwrap();
        let ens = simulate_ensemble(&m, &g, 3, 0, 1).unwrap();
        let i = 7;
        let oc = estimate_conditional_drift(&ens, &m, i, 0, 50).unwrap();
        let x0 = g.cell_center(i);
        let rho = 0.2 + 0.4 * x0;
        let expected = -(1.0 - 2.0 * rho) * 0.4;
        let occupied: Vec<_> = oc.b_hat.iter().flatten().collect();
        assert_eq!(occupied.len(), 1);
        assert!((occupied[0] - expected).abs() < 1e-12);
        assert_eq!(oc.counts.iter().sum::<usize>(), 3);
        assert!(estimate_conditional_drift(&ens, &m, 0, 0, 10).is_err());
    }

    #[test]
    fn drift_on_constant_profile_is_zero() {
        let m = model(0.0, InitialProfile::Constant(0.5));
        let g = SpaceTimeGrid::new(&m, 16, 4, Boundary::Periodic).unwrap();
        let ens = simulate_ensemble(&m, &g, 2, 0, 1).unwrap();
        let oc = estimate_conditional_drift(&ens, &m, 5, 1, 10).unwrap();
        assert_eq!(oc.b_hat.iter().flatten().copied().collect::<Vec<_>>(), vec![0.0]);
        assert!(oc.b_hat.iter().filter(|b| b.is_none()).count() == 9);
    }

    #[test]
    fn reflection_policy() {
        assert_eq!(reflect(-0.01, 1.0), 0.01);
        assert_eq!(reflect(1.02, 1.0), 0.98);
        assert_eq!(reflect(0.5, 1.0), 0.5);
    }
}
