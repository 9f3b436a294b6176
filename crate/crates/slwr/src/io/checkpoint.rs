//! Model checkpoints: magic `SLWRCKPT1`, architecture header, little-endian
//! f64 parameter payload and a trailing CRC32 of everything before it.
//!
//! Header layout after the magic (all little-endian):
//! `u32 depth, u32 width, u32 levels, u32 closure kind, u32 closure depth,
//! u32 closure width, u32 closure levels, f64 rho_max, f64 L, f64 T,
//! f64 score output scale, f64 closure output scale, u32 n_alpha,
//! u64 n_score_params, u64 n_closure_params`, then `n_alpha` amplitudes,
//! the score parameters and the closure parameters.

use std::path::Path;

use slwr_core::net::{Architecture, ClosureKind, ClosureModel, Scaling, ScoreModel, TrainedModels};

use crate::error::CliError;

pub const MAGIC: &[u8; 9] = b"SLWRCKPT1";

pub fn encode_checkpoint(m: &TrainedModels) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let u32s = |out: &mut Vec<u8>, vs: &[usize]| vs.iter().for_each(|v| out.extend_from_slice(&(*v as u32).to_le_bytes()));
    let f64s = |out: &mut Vec<u8>, vs: &[f64]| vs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    let (s, c) = (&m.score, &m.closure);
    u32s(&mut out, &[s.arch.depth, s.arch.width, s.arch.levels]);
    u32s(&mut out, &[c.kind.code() as usize, c.arch.depth, c.arch.width, c.arch.levels]);
    f64s(
        &mut out,
        &[s.scaling.rho_max, s.scaling.length, s.scaling.horizon, s.output_scale, c.output_scale],
    );
    u32s(&mut out, &[m.noise_alphas.len()]);
    out.extend_from_slice(&(s.params.len() as u64).to_le_bytes());
    out.extend_from_slice(&(c.params.len() as u64).to_le_bytes());
    f64s(&mut out, &m.noise_alphas);
    f64s(&mut out, &s.params);
    f64s(&mut out, &c.params);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize, String> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().unwrap())).map_err(|e| e.to_string())
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModels, String> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err("not an SLWRCKPT1 checkpoint".into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err("checkpoint CRC32 mismatch".into());
    }
    let mut c = Cursor {
        bytes: body,
        at: MAGIC.len(),
    };
    let arch = Architecture {
        depth: c.u32()?,
        width: c.u32()?,
        levels: c.u32()?,
    };
    let code = c.u32()?;
    let kind = ClosureKind::from_code(code as u32).ok_or(format!("unknown closure kind {code}"))?;
    let closure_arch = Architecture {
        depth: c.u32()?,
        width: c.u32()?,
        levels: c.u32()?,
    };
    let scaling = Scaling {
        rho_max: c.f64()?,
        length: c.f64()?,
        horizon: c.f64()?,
    };
    let (score_scale, closure_scale) = (c.f64()?, c.f64()?);
    let n_alpha = c.u32()?;
    let (n_score, n_closure) = (c.u64()?, c.u64()?);
    let noise_alphas = c.f64s(n_alpha)?;
    let score_params = c.f64s(n_score)?;
    let closure_params = c.f64s(n_closure)?;
    if c.at != body.len() {
        return Err("trailing bytes after the parameter payload".into());
    }
    Ok(TrainedModels {
        score: ScoreModel::from_params(arch, scaling, score_scale, score_params).map_err(|e| e.to_string())?,
        closure: ClosureModel::from_params(kind, closure_arch, scaling, closure_scale, closure_params)
            .map_err(|e| e.to_string())?,
        noise_alphas,
    })
}

pub fn write_checkpoint(path: &Path, m: &TrainedModels) -> Result<(), CliError> {
    std::fs::write(path, encode_checkpoint(m)).map_err(|e| CliError::io("cannot write checkpoint", path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModels, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io("cannot read checkpoint", path, e))?;
    decode_checkpoint(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
