//! Probability-flow velocity and RK4 particle transport.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::fpe::{numerical_score, Closure, DensityGrid, ScoreTable};
use crate::math;
use crate::model::TrafficModel;
use crate::spde::realisation_rng;
use crate::{Error, Result};

/// Anything that can supply `∂_ρ̂ log p` at a fixed position.
pub trait ScoreSource {
    fn score(&self, rho: f64, t: f64) -> Result<f64>;
    /// Density interval on which the score is trusted at time `t`.
    fn band(&self, t: f64) -> (f64, f64);
    fn time_range(&self) -> (f64, f64);
}

/// Score given by a closed-form function, trusted on `[0, ρ_max]`.
pub struct FnScore<F> {
    pub f: F,
    pub rho_max: f64,
    pub t_range: (f64, f64),
}

impl<F: Fn(f64, f64) -> f64> ScoreSource for FnScore<F> {
    fn score(&self, rho: f64, t: f64) -> Result<f64> {
        Ok((self.f)(rho, t))
    }

    fn band(&self, _t: f64) -> (f64, f64) {
        (0.0, self.rho_max)
    }

    fn time_range(&self) -> (f64, f64) {
        self.t_range
    }
}

/// Numerical scores of a stored FPE solution, linear in `ρ̂` and `t`, with
/// constant extension outside the unmasked band.
pub struct TabulatedScore {
    centers: Vec<f64>,
    times: Vec<f64>,
    tables: Vec<ScoreTable>,
    extrapolations: AtomicUsize,
}

impl TabulatedScore {
    pub fn from_grid(grid: &DensityGrid) -> Result<Self> {
        let tables = (0..grid.times.len())
            .map(|k| numerical_score(grid, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedScore {
            centers: grid.mesh.centers(),
            times: grid.times.clone(),
            tables,
            extrapolations: AtomicUsize::new(0),
        })
    }

    /// Number of score queries answered by constant extension.
    pub fn extrapolations(&self) -> usize {
        self.extrapolations.load(Ordering::Relaxed)
    }

    fn at_time(&self, k: usize, rho: f64) -> f64 {
        let table = &self.tables[k];
        let (lo, hi) = table.band();
        let c = &self.centers;
        if rho <= c[lo] {
            if rho < c[lo] {
                self.extrapolations.fetch_add(1, Ordering::Relaxed);
            }
            return table.values[lo];
        }
        if rho >= c[hi] {
            if rho > c[hi] {
                self.extrapolations.fetch_add(1, Ordering::Relaxed);
            }
            return table.values[hi];
        }
        let p = c.partition_point(|&x| x <= rho);
        let w = (rho - c[p - 1]) / (c[p] - c[p - 1]);
        (1.0 - w) * table.values[p - 1] + w * table.values[p]
    }

    fn bracket(&self, t: f64) -> Option<(usize, usize, f64)> {
        let n = self.times.len();
        let tol = 1e-9 * self.times[n - 1].abs().max(1.0);
        if t < self.times[0] - tol || t > self.times[n - 1] + tol {
            return None;
        }
        if n == 1 {
            return Some((0, 0, 0.0));
        }
        let p = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let w = ((t - self.times[p - 1]) / (self.times[p] - self.times[p - 1])).clamp(0.0, 1.0);
        Some((p - 1, p, w))
    }
}

impl ScoreSource for TabulatedScore {
    fn score(&self, rho: f64, t: f64) -> Result<f64> {
        let (a, b, w) = self.bracket(t).ok_or(Error::OutOfCoverage { rho, t })?;
        Ok((1.0 - w) * self.at_time(a, rho) + w * self.at_time(b, rho))
    }

    fn band(&self, t: f64) -> (f64, f64) {
        let band_at = |k: usize| {
            let (lo, hi) = self.tables[k].band();
            (self.centers[lo], self.centers[hi])
        };
        match self.bracket(t) {
            Some((a, b, _)) => {
                let (la, ha) = band_at(a);
                let (lb, hb) = band_at(b);
                (la.max(lb), ha.min(hb))
            }
            None => band_at(0),
        }
    }

    fn time_range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }
}

/// The three additive terms of the probability-flow velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocityComponents {
    /// (I) closure drift `b`
    pub advection: f64,
    /// (II) `−½ ∂_ρ̂ Σ²`
    pub ito: f64,
    /// (III) `−½ Σ² s`
    pub score: f64,
    pub total: f64,
}

pub struct VelocityField<'a> {
    pub model: &'a TrafficModel,
    pub closure: &'a Closure,
    pub score: &'a (dyn ScoreSource + Sync),
    pub x: f64,
}

pub fn assemble_velocity<'a>(
    closure: &'a Closure,
    model: &'a TrafficModel,
    score: &'a (dyn ScoreSource + Sync),
    x: f64,
) -> VelocityField<'a> {
    VelocityField {
        model,
        closure,
        score,
        x,
    }
}

impl VelocityField<'_> {
    pub fn components(&self, rho: f64, t: f64) -> Result<VelocityComponents> {
        let (t0, t1) = self.score.time_range();
        let tol = 1e-9 * t1.abs().max(1.0);
        if !(rho >= 0.0 && rho <= self.model.rho_max()) || t < t0 - tol || t > t1 + tol {
            return Err(Error::OutOfCoverage { rho, t });
        }
        let jet = self.model.diffusion_jet(rho, self.x);
        let s = self.score.score(rho, t)?;
        if !s.is_finite() {
            return Err(Error::NonFiniteScore { rho });
        }
        let advection = self.closure.drift(self.model, rho, self.x, t);
        let ito = -0.5 * jet[1];
        let score = -0.5 * jet[0] * s;
        Ok(VelocityComponents {
            advection,
            ito,
            score,
            total: advection + ito + score,
        })
    }

    pub fn velocity(&self, rho: f64, t: f64) -> Result<f64> {
        Ok(self.components(rho, t)?.total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub positions: Vec<f64>,
    pub t: f64,
}

/// Draws `n` particles from the cell density at `grid.times[t_index]` by
/// inverting its piecewise-linear CDF.
pub fn sample_particles(grid: &DensityGrid, t_index: usize, n: usize, seed: u64) -> Result<ParticleSet> {
    let p = grid.p.get(t_index).ok_or(Error::IndexOutOfRange {
        what: "t_index",
        index: t_index,
        len: grid.p.len(),
    })?;
    let h = grid.mesh.h;
    let mut cdf = Vec::with_capacity(p.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for &v in p {
        acc += v.max(0.0) * h;
        cdf.push(acc);
    }
    let mut rng = realisation_rng(seed, 0);
    let positions = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let c = cdf.partition_point(|&c| c <= u).clamp(1, p.len());
            let lo = cdf[c - 1];
            let w = if cdf[c] > lo { (u - lo) / (cdf[c] - lo) } else { 0.5 };
            grid.mesh.edge(c - 1) + w * h
        })
        .collect();
    Ok(ParticleSet {
        positions,
        t: grid.times[t_index],
    })
}

fn step_count(span: f64, dt: f64) -> usize {
    let raw = span.abs() / dt;
    let r = math::floor(raw + 0.5);
    if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
        r as usize
    } else {
        math::floor(raw) as usize + 1
    }
}

/// RK4 trajectory of one particle from `t_from` to `t_to` (either
/// direction), clamped to the trusted band after every step.
pub fn integrate_particle(
    field: &VelocityField<'_>,
    index: usize,
    rho: f64,
    t_from: f64,
    t_to: f64,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::config("dt_ode must be positive"));
    }
    let steps = step_count(t_to - t_from, dt);
    if steps == 0 {
        return Ok(rho);
    }
    let h = (t_to - t_from) / steps as f64;
    let fail = |t: f64| Error::Transport { particle: index, t };
    let mut r = rho;
    for n in 0..steps {
        let t = t_from + n as f64 * h;
        let clampv = |v: f64| v.clamp(0.0, field.model.rho_max());
        let v = |rr: f64, tt: f64| field.velocity(clampv(rr), tt).map_err(|_| fail(tt));
        let k1 = v(r, t)?;
        let k2 = v(r + 0.5 * h * k1, t + 0.5 * h)?;
        let k3 = v(r + 0.5 * h * k2, t + 0.5 * h)?;
        let k4 = v(r + h * k3, t + h)?;
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !r.is_finite() {
            return Err(fail(t + h));
        }
        let (lo, hi) = field.score.band(t + h);
        r = r.clamp(lo, hi);
    }
    Ok(r)
}

/// Serial forward transport of a particle set to `t_target`.
pub fn transport_particles(
    field: &VelocityField<'_>,
    particles: &ParticleSet,
    t_target: f64,
    dt_ode: f64,
) -> Result<ParticleSet> {
    if t_target < particles.t {
        return Err(Error::config("t_target precedes the particle time"));
    }
    let positions = particles
        .positions
        .iter()
        .enumerate()
        .map(|(i, &r)| integrate_particle(field, i, r, particles.t, t_target, dt_ode))
        .collect::<Result<Vec<_>>>()?;
    Ok(ParticleSet {
        positions,
        t: t_target,
    })
}

/// Near-boundary velocities at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryCheck {
    pub t: f64,
    pub v_left: f64,
    pub v_right: f64,
    pub left_ok: bool,
    pub right_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryReport {
    pub margin: f64,
    pub checks: Vec<BoundaryCheck>,
}

impl BoundaryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.left_ok && c.right_ok)
    }
}

/// Inward-pointing test: `v(margin) ≥ 0` and `v(ρ_max − margin) ≤ 0`.
pub fn check_boundary_compatibility(
    field: &VelocityField<'_>,
    times: &[f64],
    margin: f64,
) -> Result<BoundaryReport> {
    let rho_max = field.model.rho_max();
    let checks = times
        .iter()
        .map(|&t| {
            let v_left = field.velocity(margin, t)?;
            let v_right = field.velocity(rho_max - margin, t)?;
            Ok(BoundaryCheck {
                t,
                v_left,
                v_right,
                left_ok: v_left >= 0.0,
                right_ok: v_right <= 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundaryReport { margin, checks })
}
