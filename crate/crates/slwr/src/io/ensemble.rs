//! Binary ensemble files: magic `SLWR1`, a little-endian header
//! `(u32 nx, u32 n_stored_times, u32 n_real, f64 dx, f64 dt, u64 seed)` and a
//! realisation-major f64 payload.

use std::io::{Read, Write};
use std::path::Path;

use slwr_core::spde::{Boundary, Ensemble};

use crate::error::CliError;

pub const MAGIC: &[u8; 5] = b"SLWR1";
const HEADER_LEN: usize = 5 + 4 * 3 + 8 * 3;

pub fn encode_ensemble(ens: &Ensemble) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * ens.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(ens.nx as u32).to_le_bytes());
    out.extend_from_slice(&(ens.n_times() as u32).to_le_bytes());
    out.extend_from_slice(&(ens.n_real as u32).to_le_bytes());
    out.extend_from_slice(&ens.dx.to_le_bytes());
    out.extend_from_slice(&ens.snapshot_interval().to_le_bytes());
    out.extend_from_slice(&ens.seed.to_le_bytes());
    for v in &ens.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Stored times are rebuilt as `k · dt`; `rho_max` and the boundary are not
/// part of the format and come from the model configuration.
pub fn decode_ensemble(bytes: &[u8], rho_max: f64, boundary: Boundary) -> Result<Ensemble, String> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
        return Err("not an SLWR1 ensemble file".into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (nx, n_times, n_real) = (u32_at(5), u32_at(9), u32_at(13));
    let (dx, dt) = (f64_at(17), f64_at(25));
    let seed = u64::from_le_bytes(bytes[33..41].try_into().unwrap());
    let n = nx
        .checked_mul(n_times)
        .and_then(|v| v.checked_mul(n_real))
        .ok_or("ensemble dimensions overflow")?;
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(format!(
            "payload holds {} bytes, header implies {}",
            bytes.len() - HEADER_LEN,
            8 * n
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Ensemble {
        nx,
        dx,
        boundary,
        rho_max,
        n_real,
        seed,
        times: (0..n_times).map(|k| k as f64 * dt).collect(),
        data,
    })
}

pub fn write_ensemble(path: &Path, ens: &Ensemble) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io("cannot create", path, e))?;
    f.write_all(&encode_ensemble(ens))
        .map_err(|e| CliError::io("cannot write", path, e))
}

pub fn read_ensemble(path: &Path, rho_max: f64, boundary: Boundary) -> Result<Ensemble, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io("cannot read ensemble", path, e))?;
    decode_ensemble(&bytes, rho_max, boundary).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
