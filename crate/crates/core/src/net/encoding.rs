//! Sinusoidal positional encoding and the input jets fed to the networks.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::mlp::Jet;
use crate::math;
use crate::model::TrafficModel;

/// `γ(z) = (sin(2⁰πz), cos(2⁰πz), …, sin(2^{M−1}πz), cos(2^{M−1}πz))`.
pub fn encode(z: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * levels);
    for j in 0..levels {
        let w = frequency(j);
        out.push(math::sin(w * z));
        out.push(math::cos(w * z));
    }
    out
}

fn frequency(j: usize) -> f64 {
    (1u64 << j) as f64 * PI
}

/// Physical ranges used to scale inputs to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    pub rho_max: f64,
    pub length: f64,
    pub horizon: f64,
}

impl Scaling {
    pub fn from_model(model: &TrafficModel) -> Self {
        Scaling {
            rho_max: model.rho_max(),
            length: model.length,
            horizon: model.horizon,
        }
    }
}

/// Which coordinate the second-order channel differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Direction {
    Density,
    Position,
}

/// Appends `γ(z/scale)` and its derivative channels; `order_a` marks the
/// coordinate carried by the `d1`/`d2` channels and `order_b` the `db` one.
fn push_encoded(jet: &mut Jet, z: f64, scale: f64, levels: usize, order_a: bool, order_b: bool, derivs: bool) {
    for j in 0..levels {
        let w = frequency(j) / scale;
        let (s, c) = (math::sin(w * z), math::cos(w * z));
        jet.v.push(s);
        jet.v.push(c);
        if derivs {
            let (d_s, d_c) = (w * c, -w * s);
            let (dd_s, dd_c) = (-w * w * s, -w * w * c);
            jet.d1.extend([if order_a { d_s } else { 0.0 }, if order_a { d_c } else { 0.0 }]);
            jet.d2.extend([if order_a { dd_s } else { 0.0 }, if order_a { dd_c } else { 0.0 }]);
            jet.db.extend([if order_b { d_s } else { 0.0 }, if order_b { d_c } else { 0.0 }]);
        }
    }
}

/// Score-type input `(ρ̂/ρ_max, γ(x/L), γ(t/T))`; width `1 + 4M`.
pub(crate) fn density_input(s: &Scaling, levels: usize, rho: f64, x: f64, t: f64, derivs: bool) -> Jet {
    let n = 1 + 4 * levels;
    let mut jet = Jet::with_capacity(n, derivs);
    jet.v.push(rho / s.rho_max);
    if derivs {
        jet.d1.push(1.0 / s.rho_max);
        jet.d2.push(0.0);
        jet.db.push(0.0);
    }
    push_encoded(&mut jet, x, s.length, levels, false, false, derivs);
    push_encoded(&mut jet, t, s.horizon, levels, false, true, derivs);
    jet
}

/// Field-type input `(γ(x/L), γ(t/T))` with the second-order channel along
/// `x`; width `4M`.
pub(crate) fn field_input(s: &Scaling, levels: usize, x: f64, t: f64, derivs: bool) -> Jet {
    let mut jet = Jet::with_capacity(4 * levels, derivs);
    push_encoded(&mut jet, x, s.length, levels, true, false, derivs);
    push_encoded(&mut jet, t, s.horizon, levels, false, true, derivs);
    jet
}

pub(crate) fn input_width(direction: Direction, levels: usize) -> usize {
    match direction {
        Direction::Density => 1 + 4 * levels,
        Direction::Position => 4 * levels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn encoding_examples() {
        assert_eq!(encode(0.0, 2), vec![0.0, 1.0, 0.0, 1.0]);
        let e = encode(0.5, 1);
        assert!((e[0] - 1.0).abs() < 1e-15 && e[1].abs() < 1e-15);
        assert_eq!(encode(0.3, 4).len(), 8);
    }

    #[test]
    fn input_widths() {
        let s = Scaling {
            rho_max: 1.0,
            length: 2.0,
            horizon: 3.0,
        };
        assert_eq!(density_input(&s, 4, 0.2, 0.5, 1.0, true).v.len(), 17);
        assert_eq!(field_input(&s, 3, 0.5, 1.0, true).d1.len(), 12);
        assert_eq!(input_width(Direction::Density, 4), 17);
    }
}
