//! Conservative finite-volume solver for the one-point Fokker–Planck equation
//! `∂_t p = −∂_ρ̂ [b p] + ½ ∂²_ρ̂ [Σ² p]` on `[0, ρ_max]` with zero-flux ends.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::math;
use crate::model::TrafficModel;
use crate::net::ClosureModel;
use crate::spde::OracleClosure;
use crate::{Error, Result};

/// Uniform cell-centred mesh on `[0, ρ_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMesh {
    pub n_cells: usize,
    pub h: f64,
    pub rho_max: f64,
}

impl DensityMesh {
    pub fn new(n_cells: usize, rho_max: f64) -> Result<Self> {
        if n_cells < 3 || !(rho_max > 0.0) {
            return Err(Error::config("density mesh needs >= 3 cells and rho_max > 0"));
        }
        Ok(DensityMesh {
            n_cells,
            h: rho_max / n_cells as f64,
            rho_max,
        })
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.rho_max
        } else {
            i as f64 * self.h
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_cells).map(|i| self.edge(i)).collect()
    }

    pub fn mass(&self, p: &[f64]) -> f64 {
        p.iter().sum::<f64>() * self.h
    }
}

/// Time series of cell densities at one position.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    pub mesh: DensityMesh,
    pub x: f64,
    pub times: Vec<f64>,
    /// `p[k][i]`: density in cell `i` at `times[k]`.
    pub p: Vec<Vec<f64>>,
    /// Total mass added back by clipping renormalisation over the run.
    pub renormalised_mass: f64,
}

impl DensityGrid {
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.p[k]
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.mesh.center(i))
            .sum::<f64>()
            * self.mesh.h
    }

    pub fn variance(&self, k: usize) -> f64 {
        let m = self.mean(k);
        self.p[k]
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = self.mesh.center(i) - m;
                v * d * d
            })
            .sum::<f64>()
            * self.mesh.h
    }
}

/// Piecewise-linear drift tables at a sequence of times, interpolated over
/// occupied bins only and linearly in time.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedDrift {
    pub times: Vec<f64>,
    /// Occupied `(bin centre, drift)` pairs per time, ascending in density.
    pub tables: Vec<Vec<(f64, f64)>>,
}

impl TabulatedDrift {
    pub fn from_oracles(oracles: &[OracleClosure]) -> Result<Self> {
        if oracles.is_empty() {
            return Err(Error::InsufficientData("no oracle tables".into()));
        }
        let mut times = Vec::with_capacity(oracles.len());
        let mut tables = Vec::with_capacity(oracles.len());
        for o in oracles {
            let table: Vec<(f64, f64)> = o
                .bin_centers
                .iter()
                .zip(&o.b_hat)
                .filter_map(|(&c, b)| b.map(|b| (c, b)))
                .collect();
            if table.is_empty() {
                return Err(Error::InsufficientData("oracle table with no occupied bins".into()));
            }
            let first = o.b_hat.iter().position(Option::is_some).unwrap_or(0);
            let last = o.b_hat.iter().rposition(Option::is_some).unwrap_or(0);
            let gaps = o.b_hat[first..=last].iter().filter(|b| b.is_none()).count();
            if gaps > 0 {
                log::info!("oracle drift at t = {}: {gaps} interior empty bins interpolated", o.t);
            }
            times.push(o.t);
            tables.push(table);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("oracle tables must have increasing times"));
        }
        Ok(TabulatedDrift { times, tables })
    }

    fn eval_table(table: &[(f64, f64)], rho: f64) -> f64 {
        let p = table.partition_point(|&(c, _)| c <= rho);
        if p == 0 {
            table[0].1
        } else if p >= table.len() {
            table[table.len() - 1].1
        } else {
            let (c0, b0) = table[p - 1];
            let (c1, b1) = table[p];
            b0 + (b1 - b0) * (rho - c0) / (c1 - c0)
        }
    }

    pub fn eval(&self, rho: f64, t: f64) -> f64 {
        let p = self.times.partition_point(|&s| s <= t);
        if p == 0 {
            Self::eval_table(&self.tables[0], rho)
        } else if p >= self.times.len() {
            Self::eval_table(&self.tables[self.times.len() - 1], rho)
        } else {
            let w = (t - self.times[p - 1]) / (self.times[p] - self.times[p - 1]);
            (1.0 - w) * Self::eval_table(&self.tables[p - 1], rho)
                + w * Self::eval_table(&self.tables[p], rho)
        }
    }
}

/// Conditional-drift model `b(ρ̂, x, t)`.
#[derive(Clone, Debug)]
pub enum Closure {
    Zero,
    OracleTabulated(TabulatedDrift),
    /// `b = −f′(ρ̂) ∂_x ρ̄(x, t)` with the mean-state gradient tabulated in
    /// time at the solve position.
    MeanField { times: Vec<f64>, gradient: Vec<f64> },
    Learned(Box<ClosureModel>),
}

fn interp_time(times: &[f64], values: &[f64], t: f64) -> f64 {
    let p = times.partition_point(|&s| s <= t);
    if p == 0 {
        values[0]
    } else if p >= times.len() {
        values[times.len() - 1]
    } else {
        let w = (t - times[p - 1]) / (times[p] - times[p - 1]);
        (1.0 - w) * values[p - 1] + w * values[p]
    }
}

impl Closure {
    pub fn drift(&self, model: &TrafficModel, rho: f64, x: f64, t: f64) -> f64 {
        match self {
            Closure::Zero => 0.0,
            Closure::OracleTabulated(tab) => tab.eval(rho, t),
            Closure::MeanField { times, gradient } => {
                -model.flux.df(rho) * interp_time(times, gradient, t)
            }
            Closure::Learned(m) => m.drift(&model.flux, rho, x, t),
        }
    }

    /// `[b, ∂_ρ̂ b, ∂²_ρ̂ b]`.
    pub fn drift_jet(&self, model: &TrafficModel, rho: f64, x: f64, t: f64) -> [f64; 3] {
        match self {
            Closure::Zero => [0.0; 3],
            Closure::OracleTabulated(_) => {
                let d = 1e-3 * model.rho_max();
                let b0 = self.drift(model, rho, x, t);
                let bp = self.drift(model, rho + d, x, t);
                let bm = self.drift(model, rho - d, x, t);
                [b0, (bp - bm) / (2.0 * d), (bp - 2.0 * b0 + bm) / (d * d)]
            }
            Closure::MeanField { times, gradient } => {
                let g = interp_time(times, gradient, t);
                let f = &model.flux;
                [-f.df(rho) * g, -f.d2f(rho) * g, -f.d3f(rho) * g]
            }
            Closure::Learned(m) => m.drift_jet(&model.flux, rho, x, t),
        }
    }
}

/// Gaussian of standard deviation `eps_width` centred at `rho0`, sampled at
/// cell centres, truncated to the mesh and renormalised.
pub fn mollified_delta(mesh: &DensityMesh, rho0: f64, eps_width: f64) -> Result<Vec<f64>> {
    if !(rho0 > 0.0 && rho0 < mesh.rho_max) {
        return Err(Error::Domain {
            quantity: "rho0",
            value: rho0,
            lo: 0.0,
            hi: mesh.rho_max,
        });
    }
    if !(eps_width >= 2.0 * mesh.h) {
        return Err(Error::UnderResolved {
            width: eps_width,
            min: 2.0 * mesh.h,
        });
    }
    let mut p: Vec<f64> = (0..mesh.n_cells)
        .map(|i| {
            let z = (mesh.center(i) - rho0) / eps_width;
            math::exp(-0.5 * z * z)
        })
        .collect();
    let mass = mesh.mass(&p);
    p.iter_mut().for_each(|v| *v /= mass);
    Ok(p)
}

/// Edge fluxes `J` (length `n_cells + 1`): upwinded `b p` minus the central
/// difference of `½ Σ² p`; both outer edges are exactly zero.
pub fn probability_flux(
    p: &[f64],
    closure: &Closure,
    model: &TrafficModel,
    mesh: &DensityMesh,
    x: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if p.len() != mesh.n_cells {
        return Err(Error::config("cell vector length does not match the mesh"));
    }
    if let Some(i) = p.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::Domain {
            quantity: "cell density",
            value: p[i],
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let s2: Vec<f64> = (0..mesh.n_cells)
        .map(|i| model.diffusion_jet(mesh.center(i), x)[0])
        .collect();
    let mut j = alloc::vec![0.0; mesh.n_cells + 1];
    let mut drifts = alloc::vec![0.0; mesh.n_cells + 1];
    edge_fluxes(p, &s2, closure, model, mesh, x, t, &mut drifts, &mut j);
    Ok(j)
}

#[allow(clippy::too_many_arguments)]
fn edge_fluxes(
    p: &[f64],
    s2: &[f64],
    closure: &Closure,
    model: &TrafficModel,
    mesh: &DensityMesh,
    x: f64,
    t: f64,
    drifts: &mut [f64],
    j: &mut [f64],
) {
    let n = mesh.n_cells;
    j[0] = 0.0;
    j[n] = 0.0;
    for e in 1..n {
        let b = closure.drift(model, mesh.edge(e), x, t);
        drifts[e] = b;
        let upwind = if b > 0.0 { p[e - 1] } else { p[e] };
        j[e] = b * upwind - 0.5 * (s2[e] * p[e] - s2[e - 1] * p[e - 1]) / mesh.h;
    }
}

/// Time-stepping controls for [`solve_fpe`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpeSettings {
    pub t_start: f64,
    pub t_end: f64,
    /// Upper bound on the step; the actual step divides the span evenly.
    pub dt: f64,
    /// Store every this many steps (the final state is always stored).
    pub store_every: usize,
}

/// Largest forward-Euler step allowed by the parabolic bound alone.
pub fn parabolic_limit(model: &TrafficModel, mesh: &DensityMesh, x: f64) -> f64 {
    let max_s2 = (0..mesh.n_cells)
        .map(|i| model.diffusion_jet(mesh.center(i), x)[0])
        .fold(0.0, f64::max);
    if max_s2 > 0.0 {
        0.4 * mesh.h * mesh.h / max_s2
    } else {
        f64::INFINITY
    }
}

pub fn solve_fpe(
    model: &TrafficModel,
    closure: &Closure,
    x: f64,
    mesh: &DensityMesh,
    settings: FpeSettings,
    init: &[f64],
) -> Result<DensityGrid> {
    let FpeSettings {
        t_start,
        t_end,
        dt,
        store_every,
    } = settings;
    if init.len() != mesh.n_cells {
        return Err(Error::config("initial vector length does not match the mesh"));
    }
    if !(t_end >= t_start) || !(dt > 0.0) || store_every == 0 {
        return Err(Error::config("need t_end >= t_start, dt > 0 and store_every >= 1"));
    }
    let limit = parabolic_limit(model, mesh, x);
    if dt > limit {
        return Err(Error::StabilityBound {
            bound: "parabolic dt <= 0.4 h^2 / max Sigma^2",
            limit,
            dt,
        });
    }
    let span = t_end - t_start;
    let steps = if span > 0.0 {
        let raw = span / dt;
        let r = math::floor(raw + 0.5);
        // Tolerate representation error when dt divides the span.
        if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
            r as usize
        } else {
            math::floor(raw) as usize + 1
        }
    } else {
        0
    };
    let dt = if steps > 0 { span / steps as f64 } else { dt };

    let s2: Vec<f64> = (0..mesh.n_cells)
        .map(|i| model.diffusion_jet(mesh.center(i), x)[0])
        .collect();
    let mut p = init.to_vec();
    let mass0 = mesh.mass(&p);
    if (mass0 - 1.0).abs() > 1e-10 {
        return Err(Error::SolverIntegrity(alloc::format!(
            "initial mass {mass0} is not 1"
        )));
    }
    let mut times = alloc::vec![t_start];
    let mut stored = alloc::vec![p.clone()];
    let mut j = alloc::vec![0.0; mesh.n_cells + 1];
    let mut drifts = alloc::vec![0.0; mesh.n_cells + 1];
    let mut renormalised = 0.0;
    let advective_factor = 0.9 * mesh.h;
    let ratio = dt / mesh.h;

    for n in 1..=steps {
        let t = t_start + (n - 1) as f64 * dt;
        edge_fluxes(&p, &s2, closure, model, mesh, x, t, &mut drifts, &mut j);
        let max_b = drifts.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if max_b > 0.0 && dt * max_b > advective_factor {
            return Err(Error::StabilityBound {
                bound: "advective dt <= 0.9 h / max|b|",
                limit: advective_factor / max_b,
                dt,
            });
        }
        let mut min = f64::INFINITY;
        for i in 0..mesh.n_cells {
            p[i] -= ratio * (j[i + 1] - j[i]);
            min = min.min(p[i]);
        }
        if !min.is_finite() {
            return Err(Error::SolverIntegrity(alloc::format!("non-finite density at step {n}")));
        }
        if min < -1e-14 {
            return Err(Error::SolverIntegrity(alloc::format!(
                "negative density {min:e} at step {n} exceeds the round-off threshold"
            )));
        }
        if min < 0.0 {
            let before = mesh.mass(&p);
            p.iter_mut().for_each(|v| *v = v.max(0.0));
            let after = mesh.mass(&p);
            renormalised += (after - before).abs();
            p.iter_mut().for_each(|v| *v *= before / after);
        }
        let mass = mesh.mass(&p);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::SolverIntegrity(alloc::format!(
                "mass drifted to {mass} at step {n}"
            )));
        }
        if n % store_every == 0 || n == steps {
            times.push(t_start + n as f64 * dt);
            stored.push(p.clone());
        }
    }
    if renormalised > 1e-9 {
        log::warn!("cumulative clipping renormalisation {renormalised:e} exceeds 1e-9");
    }
    Ok(DensityGrid {
        mesh: *mesh,
        x,
        times,
        p: stored,
        renormalised_mass: renormalised,
    })
}

/// Cell scores `∂_ρ̂ log p` with a mask of usable cells.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub values: Vec<f64>,
    /// `false` where `p < 1e-12 · max p`.
    pub unmasked: Vec<bool>,
}

impl ScoreTable {
    /// First and last unmasked cell.
    pub fn band(&self) -> (usize, usize) {
        let lo = self.unmasked.iter().position(|&u| u).unwrap_or(0);
        let hi = self.unmasked.iter().rposition(|&u| u).unwrap_or(0);
        (lo, hi)
    }
}

pub fn numerical_score(grid: &DensityGrid, t_index: usize) -> Result<ScoreTable> {
    let p = grid.p.get(t_index).ok_or(Error::IndexOutOfRange {
        what: "t_index",
        index: t_index,
        len: grid.p.len(),
    })?;
    score_of_cells(p, grid.mesh.h)
}

pub(crate) fn score_of_cells(p: &[f64], h: f64) -> Result<ScoreTable> {
    let n = p.len();
    let max = p.iter().copied().fold(0.0, f64::max);
    let unmasked: Vec<bool> = p.iter().map(|&v| v >= 1e-12 * max && v > 0.0).collect();
    if unmasked.iter().filter(|&&u| u).count() < 3 {
        return Err(Error::InsufficientData("fewer than 3 unmasked cells".into()));
    }
    let lp: Vec<f64> = p.iter().map(|&v| if v > 0.0 { math::ln(v) } else { 0.0 }).collect();
    let mut values = alloc::vec![0.0; n];
    for i in 0..n {
        if !unmasked[i] {
            continue;
        }
        let left = i > 0 && unmasked[i - 1];
        let right = i + 1 < n && unmasked[i + 1];
        values[i] = match (left, right) {
            (true, true) => (lp[i + 1] - lp[i - 1]) / (2.0 * h),
            (false, true) => (lp[i + 1] - lp[i]) / h,
            (true, false) => (lp[i] - lp[i - 1]) / h,
            (false, false) => 0.0,
        };
    }
    Ok(ScoreTable { values, unmasked })
}
