use alloc::boxed::Box;
use alloc::string::String;

use crate::net::TrainedModels;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside its admissible range [{lo}, {hi}]")]
    Domain {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stability bound violated: {bound} requires dt <= {limit:e}, got {dt:e}")]
    StabilityBound {
        bound: &'static str,
        limit: f64,
        dt: f64,
    },

    #[error("simulation diverged at step {step} in realisation {realisation}")]
    SimulationDiverged { step: usize, realisation: usize },

    #[error("mollifier width {width:e} under-resolved; needs at least 2h = {min:e}")]
    UnderResolved { width: f64, min: f64 },

    #[error("solver integrity: {0}")]
    SolverIntegrity(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("index {index} out of range ({len} available) for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("query ({rho}, t = {t}) outside the score source coverage")]
    OutOfCoverage { rho: f64, t: f64 },

    #[error("transport failed for particle {particle} at t = {t}")]
    Transport { particle: usize, t: f64 },

    #[error("non-finite score at rho = {rho}")]
    NonFiniteScore { rho: f64 },

    #[error("unsupported flux: {0}")]
    UnsupportedFlux(String),

    #[error("DSM scale {scale} rejected {rate:.4} of perturbations; scale too large for the density domain")]
    ScaleTooLarge { scale: f64, rate: f64 },

    #[error("training diverged at epoch {epoch} (loss {loss:e})")]
    TrainingDiverged {
        epoch: usize,
        loss: f64,
        last_good: Box<TrainedModels>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check_range(quantity: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
        if value.is_nan() || value < lo || value > hi {
            Err(Error::Domain {
                quantity,
                value,
                lo,
                hi,
            })
        } else {
            Ok(())
        }
    }
}
