//! Scalar score network `s_θ(ρ̂; x, t)` with exact input derivatives.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{density_input, input_width, Direction, Scaling};
use super::mlp::{Mlp, Tape};
use crate::pfode::ScoreSource;
use crate::{Error, Result};

/// Hidden-layer depth, width and encoding levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub depth: usize,
    pub width: usize,
    pub levels: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            depth: 4,
            width: 64,
            levels: 4,
        }
    }
}

/// `(s, ∂_ρ̂ s, ∂²_ρ̂ s, ∂_t s)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScoreDerivatives {
    pub s: f64,
    pub s_rho: f64,
    pub s_rho2: f64,
    pub s_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    pub arch: Architecture,
    pub scaling: Scaling,
    /// Multiplies the raw network output.
    pub output_scale: f64,
    pub params: Vec<f64>,
    mlp: Mlp,
}

impl ScoreModel {
    pub fn new(arch: Architecture, scaling: Scaling, output_scale: f64, seed: u64) -> Self {
        let mlp = Mlp::new(input_width(Direction::Density, arch.levels), arch.width, arch.depth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = mlp.xavier_init(&mut rng, false);
        ScoreModel {
            arch,
            scaling,
            output_scale,
            params,
            mlp,
        }
    }

    pub fn from_params(arch: Architecture, scaling: Scaling, output_scale: f64, params: Vec<f64>) -> Result<Self> {
        let mlp = Mlp::new(input_width(Direction::Density, arch.levels), arch.width, arch.depth);
        if params.len() != mlp.n_params() {
            return Err(Error::Config(alloc::format!(
                "score network expects {} parameters, got {}",
                mlp.n_params(),
                params.len()
            )));
        }
        Ok(ScoreModel {
            arch,
            scaling,
            output_scale,
            params,
            mlp,
        })
    }

    pub fn n_params(&self) -> usize {
        self.mlp.n_params()
    }

    pub fn value(&self, rho: f64, x: f64, t: f64) -> f64 {
        self.value_with(&self.params, rho, x, t, None)
    }

    pub fn eval_with_derivatives(&self, rho: f64, x: f64, t: f64) -> ScoreDerivatives {
        self.derivs_with(&self.params, rho, x, t, None)
    }

    pub(crate) fn value_with(&self, params: &[f64], rho: f64, x: f64, t: f64, tape: Option<&mut Tape>) -> f64 {
        let input = density_input(&self.scaling, self.arch.levels, rho, x, t, false);
        self.output_scale * self.mlp.forward(params, input, tape)[0]
    }

    pub(crate) fn derivs_with(
        &self,
        params: &[f64],
        rho: f64,
        x: f64,
        t: f64,
        tape: Option<&mut Tape>,
    ) -> ScoreDerivatives {
        let input = density_input(&self.scaling, self.arch.levels, rho, x, t, true);
        let o = self.mlp.forward(params, input, tape);
        let c = self.output_scale;
        ScoreDerivatives {
            s: c * o[0],
            s_rho: c * o[1],
            s_rho2: c * o[2],
            s_t: c * o[3],
        }
    }

    /// Backpropagates `bar · (s, s_ρ, s_ρρ, s_t)` into `grad`.
    pub(crate) fn backward(&self, params: &[f64], tape: &Tape, bar: [f64; 4], grad: &mut [f64]) {
        let c = self.output_scale;
        self.mlp
            .backward(params, tape, [c * bar[0], c * bar[1], c * bar[2], c * bar[3]], grad);
    }

    /// View as a score source at fixed position `x`.
    pub fn at(&self, x: f64) -> NetScore<'_> {
        NetScore { model: self, x }
    }
}

pub struct NetScore<'a> {
    pub model: &'a ScoreModel,
    pub x: f64,
}

impl ScoreSource for NetScore<'_> {
    fn score(&self, rho: f64, t: f64) -> Result<f64> {
        let s = self.model.value(rho, self.x, t);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::NonFiniteScore { rho })
        }
    }

    fn band(&self, _t: f64) -> (f64, f64) {
        (0.0, self.model.scaling.rho_max)
    }

    fn time_range(&self) -> (f64, f64) {
        (0.0, self.model.scaling.horizon)
    }
}
