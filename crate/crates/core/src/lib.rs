//! Numerical core of the stochastic LWR (SLWR) distributional pipeline.
//!
//! The crate is `no_std` with `alloc`: every routine here is pure computation.
//! File formats, configuration parsing, parallel orchestration and the CLI
//! live in the companion `slwr` crate.
//!
//! Layers, bottom to top:
//!
//! - [`model`]: flux functions, factorised noise, initial data and the
//!   standing-assumption validator.
//! - [`spde`]: Euler–Maruyama Monte Carlo of the SPDE with a Rusanov flux,
//!   empirical one-point marginals and the binned conditional-drift oracle.
//! - [`fpe`]: conservative finite-volume solver for the one-point
//!   Fokker–Planck equation with pluggable closures.
//! - [`pfode`]: probability-flow velocity and RK4 particle transport.
//! - [`net`]: score network with exact input derivatives, closure networks,
//!   score-form residual, losses and the training loop.
//! - [`inference`]: quadrature density recovery, summary statistics,
//!   congestion risk and the flow pushforward.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod fpe;
pub mod inference;
pub mod math;
pub mod model;
pub mod net;
pub mod pfode;
pub mod quadrature;
pub mod spde;
pub mod stats;

pub use error::{Error, Result};
