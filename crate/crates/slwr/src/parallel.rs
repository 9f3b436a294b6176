//! Thread-pool orchestration of the embarrassingly parallel stages.
//!
//! Every job owns its RNG stream (realisations) or is deterministic
//! (particles), and results are collected in index order, so outputs do not
//! depend on the number of workers.

use rayon::prelude::*;
use rayon::ThreadPool;
use slwr_core::model::TrafficModel;
use slwr_core::pfode::{integrate_particle, ParticleSet, VelocityField};
use slwr_core::spde::{assemble_ensemble, check_simulable, simulate_realisation, Ensemble, SpaceTimeGrid};
use slwr_core::{Error, Result};

use crate::error::CliError;

/// Pool with `threads` workers; `None` or 0 lets rayon pick.
pub fn pool(threads: Option<usize>) -> Result<ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))
}

pub fn simulate_ensemble(
    pool: &ThreadPool,
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    n_real: usize,
    seed: u64,
    store_every: usize,
) -> Result<Ensemble> {
    check_simulable(model)?;
    let runs = pool.install(|| {
        (0..n_real)
            .into_par_iter()
            .map(|r| simulate_realisation(model, grid, store_every, seed, r))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(assemble_ensemble(model, grid, store_every, seed, runs))
}

/// Simulates the ensemble but keeps only cells `x_index − 1 ..= x_index + 1`
/// (wrapped for periodic grids). The result is a three-cell ensemble whose
/// middle cell carries the same values and central-difference gradients as
/// `x_index` in the full one.
pub fn simulate_local_columns(
    pool: &ThreadPool,
    model: &TrafficModel,
    grid: &SpaceTimeGrid,
    n_real: usize,
    seed: u64,
    store_every: usize,
    x_index: usize,
) -> Result<Ensemble> {
    check_simulable(model)?;
    let nx = grid.nx;
    if x_index >= nx {
        return Err(Error::IndexOutOfRange {
            what: "x_index",
            index: x_index,
            len: nx,
        });
    }
    let cols = [(x_index + nx - 1) % nx, x_index, (x_index + 1) % nx];
    let runs = pool.install(|| {
        (0..n_real)
            .into_par_iter()
            .map(|r| {
                let full = simulate_realisation(model, grid, store_every, seed, r)?;
                Ok(full
                    .chunks_exact(nx)
                    .flat_map(|row| cols.map(|c| row[c]))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut ens = assemble_ensemble(model, grid, store_every, seed, runs);
    ens.nx = 3;
    Ok(ens)
}

pub fn transport_particles(
    pool: &ThreadPool,
    field: &VelocityField<'_>,
    particles: &ParticleSet,
    t_target: f64,
    dt_ode: f64,
) -> Result<ParticleSet> {
    if t_target < particles.t {
        return Err(Error::Config("t_target precedes the particle time".into()));
    }
    let positions = pool.install(|| {
        particles
            .positions
            .par_iter()
            .enumerate()
            .map(|(i, &r)| integrate_particle(field, i, r, particles.t, t_target, dt_ode))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ParticleSet {
        positions,
        t: t_target,
    })
}
