//! Learnable conditional-drift closures `b_φ(ρ̂, x, t)`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{density_input, field_input, input_width, Direction, Scaling};
use super::mlp::{Mlp, Tape};
use super::score::Architecture;
use crate::model::FluxFunction;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClosureKind {
    /// `b ≡ 0`, equivalent to a structured closure with `m` frozen at zero.
    Zero,
    /// `b = −f′(ρ̂) m_φ(ρ̂, x, t)`.
    StructuredM,
    /// `b = −f′(ρ̂) ∂_x ρ̄_φ(x, t)`.
    MeanFieldNet,
    /// `b = N_φ(ρ̂, x, t)`.
    Direct,
}

impl ClosureKind {
    pub fn code(self) -> u32 {
        match self {
            ClosureKind::Zero => 0,
            ClosureKind::StructuredM => 1,
            ClosureKind::MeanFieldNet => 2,
            ClosureKind::Direct => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => ClosureKind::Zero,
            1 => ClosureKind::StructuredM,
            2 => ClosureKind::MeanFieldNet,
            3 => ClosureKind::Direct,
            _ => return None,
        })
    }

    fn direction(self) -> Direction {
        match self {
            ClosureKind::MeanFieldNet => Direction::Position,
            _ => Direction::Density,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureModel {
    pub kind: ClosureKind,
    pub arch: Architecture,
    pub scaling: Scaling,
    pub output_scale: f64,
    pub params: Vec<f64>,
    mlp: Option<Mlp>,
}

fn network(kind: ClosureKind, arch: &Architecture) -> Option<Mlp> {
    match kind {
        ClosureKind::Zero => None,
        _ => Some(Mlp::new(input_width(kind.direction(), arch.levels), arch.width, arch.depth)),
    }
}

impl ClosureModel {
    /// Xavier-initialised hidden layers and a zero output layer, so every
    /// closure starts at `b ≡ 0`.
    pub fn new(kind: ClosureKind, arch: Architecture, scaling: Scaling, output_scale: f64, seed: u64) -> Self {
        let mlp = network(kind, &arch);
        let params = match &mlp {
            Some(m) => m.xavier_init(&mut ChaCha8Rng::seed_from_u64(seed), true),
            None => Vec::new(),
        };
        ClosureModel {
            kind,
            arch,
            scaling,
            output_scale,
            params,
            mlp,
        }
    }

    pub fn zero(scaling: Scaling) -> Self {
        Self::new(
            ClosureKind::Zero,
            Architecture {
                depth: 0,
                width: 0,
                levels: 0,
            },
            scaling,
            1.0,
            0,
        )
    }

    pub fn from_params(
        kind: ClosureKind,
        arch: Architecture,
        scaling: Scaling,
        output_scale: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mlp = network(kind, &arch);
        let expected = mlp.as_ref().map_or(0, Mlp::n_params);
        if params.len() != expected {
            return Err(Error::Config(alloc::format!(
                "closure network expects {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(ClosureModel {
            kind,
            arch,
            scaling,
            output_scale,
            params,
            mlp,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn drift(&self, flux: &FluxFunction, rho: f64, x: f64, t: f64) -> f64 {
        self.drift_jet(flux, rho, x, t)[0]
    }

    /// `[b, ∂_ρ̂ b, ∂²_ρ̂ b]`.
    pub fn drift_jet(&self, flux: &FluxFunction, rho: f64, x: f64, t: f64) -> [f64; 3] {
        self.jet_with(&self.params, flux, rho, x, t, None)
    }

    /// Mean-state gradient `∂_x ρ̄_φ(x, t)` of a mean-field closure.
    pub fn mean_gradient(&self, x: f64, t: f64) -> Option<f64> {
        match (self.kind, &self.mlp) {
            (ClosureKind::MeanFieldNet, Some(m)) => {
                let input = field_input(&self.scaling, self.arch.levels, x, t, true);
                Some(self.output_scale * m.forward(&self.params, input, None)[1])
            }
            _ => None,
        }
    }

    fn raw(&self, params: &[f64], rho: f64, x: f64, t: f64, tape: Option<&mut Tape>) -> [f64; 4] {
        let Some(m) = &self.mlp else {
            return [0.0; 4];
        };
        let input = match self.kind.direction() {
            Direction::Density => density_input(&self.scaling, self.arch.levels, rho, x, t, true),
            Direction::Position => field_input(&self.scaling, self.arch.levels, x, t, true),
        };
        let o = m.forward(params, input, tape);
        let c = self.output_scale;
        [c * o[0], c * o[1], c * o[2], c * o[3]]
    }

    pub(crate) fn jet_with(
        &self,
        params: &[f64],
        flux: &FluxFunction,
        rho: f64,
        x: f64,
        t: f64,
        tape: Option<&mut Tape>,
    ) -> [f64; 3] {
        match self.kind {
            ClosureKind::Zero => [0.0; 3],
            ClosureKind::StructuredM => {
                let [m, m1, m2, _] = self.raw(params, rho, x, t, tape);
                let (f1, f2, f3) = (flux.df(rho), flux.d2f(rho), flux.d3f(rho));
                [-f1 * m, -f2 * m - f1 * m1, -f3 * m - 2.0 * f2 * m1 - f1 * m2]
            }
            ClosureKind::MeanFieldNet => {
                let g = self.raw(params, rho, x, t, tape)[1];
                [-flux.df(rho) * g, -flux.d2f(rho) * g, -flux.d3f(rho) * g]
            }
            ClosureKind::Direct => {
                let [b, b1, b2, _] = self.raw(params, rho, x, t, tape);
                [b, b1, b2]
            }
        }
    }

    /// Backpropagates `bar · (b, b_ρ, b_ρρ)` into `grad`.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        tape: &Tape,
        flux: &FluxFunction,
        rho: f64,
        bar: [f64; 3],
        grad: &mut [f64],
    ) {
        let Some(m) = &self.mlp else {
            return;
        };
        let (f1, f2, f3) = (flux.df(rho), flux.d2f(rho), flux.d3f(rho));
        let raw_bar = match self.kind {
            ClosureKind::Zero => return,
            ClosureKind::StructuredM => [
                -f1 * bar[0] - f2 * bar[1] - f3 * bar[2],
                -f1 * bar[1] - 2.0 * f2 * bar[2],
                -f1 * bar[2],
                0.0,
            ],
            ClosureKind::MeanFieldNet => [0.0, -f1 * bar[0] - f2 * bar[1] - f3 * bar[2], 0.0, 0.0],
            ClosureKind::Direct => [bar[0], bar[1], bar[2], 0.0],
        };
        let c = self.output_scale;
        m.backward(params, tape, raw_bar.map(|v| c * v), grad);
    }
}
