//! CSV tables: density grids, observations, particles, training logs and
//! flow densities.

use std::path::Path;

use slwr_core::fpe::{DensityGrid, DensityMesh};
use slwr_core::inference::FlowDensity;
use slwr_core::model::FluxFunction;
use slwr_core::net::train::{Phase, TrainLog};
use slwr_core::net::{ObservationKind, ObservationSet};

use crate::error::CliError;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::io("cannot create", path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::Reader::from_path(path).map_err(|e| CliError::io("cannot read", path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    let fail = |e: csv::Error| CliError::io("cannot write", path, e);
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io("cannot write", path, e))
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| CliError::config(format!("{}:{line}: {field} = {s:?} is not a number", path.display())))
}

/// Columns `t, rho_hat, p`, one row per cell and stored time.
pub fn write_pgrid(path: &Path, grid: &DensityGrid) -> Result<(), CliError> {
    let centers = grid.mesh.centers();
    write_rows(
        path,
        &["t", "rho_hat", "p"],
        grid.times.iter().zip(&grid.p).flat_map(|(t, p)| {
            centers
                .iter()
                .zip(p)
                .map(move |(c, v)| vec![t.to_string(), c.to_string(), v.to_string()])
        }),
    )
}

/// Rebuilds the mesh from the cell centres of the first time block.
pub fn read_pgrid(path: &Path, x: f64) -> Result<DensityGrid, CliError> {
    let mut times: Vec<f64> = Vec::new();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut centers: Vec<f64> = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io("cannot parse", path, e))?;
        if rec.len() != 3 {
            return Err(CliError::config(format!("{}:{}: expected t, rho_hat, p", path.display(), i + 2)));
        }
        let t = parse_f64(path, i + 2, "t", &rec[0])?;
        let c = parse_f64(path, i + 2, "rho_hat", &rec[1])?;
        let v = parse_f64(path, i + 2, "p", &rec[2])?;
        if times.last() != Some(&t) {
            times.push(t);
            p.push(Vec::new());
        }
        if times.len() == 1 {
            centers.push(c);
        }
        p.last_mut().unwrap().push(v);
    }
    let n = centers.len();
    if n < 3 || p.iter().any(|row| row.len() != n) {
        return Err(CliError::config(format!("{}: ragged or too small density grid", path.display())));
    }
    let h = 2.0 * centers[0];
    let mesh = DensityMesh::new(n, h * n as f64)?;
    if centers.iter().enumerate().any(|(i, c)| (c - mesh.center(i)).abs() > 1e-9 * mesh.rho_max) {
        return Err(CliError::config(format!("{}: cell centres are not a uniform mesh", path.display())));
    }
    Ok(DensityGrid {
        mesh,
        x,
        times,
        p,
        renormalised_mass: 0.0,
    })
}

/// Columns `x, t, kind, value` with `kind ∈ {rho, u}`.
pub fn read_observations(path: &Path, flux: &FluxFunction) -> Result<ObservationSet, CliError> {
    let mut records = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io("cannot parse", path, e))?;
        if rec.len() != 4 {
            return Err(CliError::config(format!("{}:{}: expected x, t, kind, value", path.display(), i + 2)));
        }
        let kind = match rec[2].trim() {
            "rho" => ObservationKind::Density,
            "u" => ObservationKind::Speed,
            other => {
                return Err(CliError::config(format!(
                    "{}:{}: kind must be rho or u, got {other:?}",
                    path.display(),
                    i + 2
                )))
            }
        };
        records.push((
            parse_f64(path, i + 2, "x", &rec[0])?,
            parse_f64(path, i + 2, "t", &rec[1])?,
            kind,
            parse_f64(path, i + 2, "value", &rec[3])?,
        ));
    }
    Ok(ObservationSet::from_records(&records, flux)?)
}

pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<(), CliError> {
    write_rows(
        path,
        &["x", "t", "kind", "value"],
        obs.records
            .iter()
            .map(|o| vec![o.x.to_string(), o.t.to_string(), "rho".into(), o.rho.to_string()]),
    )
}

/// Columns `index, t, rho_hat`.
pub fn write_particles(path: &Path, t: f64, positions: &[f64]) -> Result<(), CliError> {
    write_rows(
        path,
        &["index", "t", "rho_hat"],
        positions
            .iter()
            .enumerate()
            .map(|(i, r)| vec![i.to_string(), t.to_string(), r.to_string()]),
    )
}

pub fn write_train_log(path: &Path, log: &TrainLog) -> Result<(), CliError> {
    write_rows(
        path,
        &[
            "epoch", "phase", "total", "dsm", "physics", "bc_flux", "bc_initial", "lambda", "learning_rate", "alphas",
        ],
        log.records.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                match r.phase {
                    Phase::Main => "main".into(),
                    Phase::FineTune => "finetune".into(),
                },
                r.total.to_string(),
                r.dsm.to_string(),
                r.physics.to_string(),
                r.bc_flux.to_string(),
                r.bc_initial.to_string(),
                r.lambda.to_string(),
                r.learning_rate.to_string(),
                r.alphas.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
            ]
        }),
    )
}

/// Columns `q, p_q`.
pub fn write_flow(path: &Path, flow: &FlowDensity) -> Result<(), CliError> {
    write_rows(
        path,
        &["q", "p_q"],
        flow.q_nodes
            .iter()
            .zip(&flow.p_q)
            .map(|(q, p)| vec![q.to_string(), p.to_string()]),
    )
}
