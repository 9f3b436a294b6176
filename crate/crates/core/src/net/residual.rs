//! Closed probability-flow velocity and the score-form FPE residual
//! `R = ∂_t s + v ∂_ρ̂ s + (∂_ρ̂ v) s + ∂²_ρ̂ v`.

use alloc::vec::Vec;

use super::closure::ClosureModel;
use super::score::{ScoreDerivatives, ScoreModel};
use crate::fpe::{Closure, DensityGrid};
use crate::math;
use crate::model::TrafficModel;
use crate::{Error, Result};

/// `[v, ∂_ρ̂ v, ∂²_ρ̂ v]` for `v = b − ½ ∂_ρ̂ Σ² − ½ Σ² s`, where `sig` is
/// `[Σ², ∂Σ², ∂²Σ², ∂³Σ²]` and `b` is `[b, ∂b, ∂²b]`.
pub fn velocity_jet(d: &ScoreDerivatives, b: [f64; 3], sig: [f64; 4]) -> [f64; 3] {
    let (s, s1, s2) = (d.s, d.s_rho, d.s_rho2);
    let [sg, sg1, sg2, sg3] = sig;
    [
        b[0] - 0.5 * sg1 - 0.5 * sg * s,
        b[1] - 0.5 * sg2 - 0.5 * (sg1 * s + sg * s1),
        b[2] - 0.5 * sg3 - 0.5 * (sg2 * s + 2.0 * sg1 * s1 + sg * s2),
    ]
}

pub fn residual_value(d: &ScoreDerivatives, b: [f64; 3], sig: [f64; 4]) -> f64 {
    let [v, v1, v2] = velocity_jet(d, b, sig);
    d.s_t + v * d.s_rho + v1 * d.s + v2
}

/// Partial derivatives of `R` with respect to every ingredient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualPartials {
    /// Order `(s, s_ρ, s_ρρ, s_t)`.
    pub score: [f64; 4],
    pub drift: [f64; 3],
    pub sigma: [f64; 4],
}

pub fn residual_partials(d: &ScoreDerivatives, b: [f64; 3], sig: [f64; 4]) -> ResidualPartials {
    let (s, s1, s2) = (d.s, d.s_rho, d.s_rho2);
    let [sg, sg1, sg2, _] = sig;
    let [v, v1, _] = velocity_jet(d, b, sig);
    ResidualPartials {
        score: [
            v1 - 0.5 * sg * s1 - 0.5 * sg1 * s - 0.5 * sg2,
            v - 0.5 * sg * s - sg1,
            -0.5 * sg,
            1.0,
        ],
        drift: [s1, s, 1.0],
        sigma: [-s * s1 - 0.5 * s2, -1.5 * s1 - 0.5 * s * s, -s, -0.5],
    }
}

/// Closed velocity of a learned score and closure.
pub fn closed_velocity(
    score: &ScoreModel,
    closure: &ClosureModel,
    traffic: &TrafficModel,
    rho: f64,
    x: f64,
    t: f64,
) -> [f64; 3] {
    let d = score.eval_with_derivatives(rho, x, t);
    let b = closure.drift_jet(&traffic.flux, rho, x, t);
    velocity_jet(&d, b, traffic.diffusion_jet(rho, x))
}

pub fn fpe_residual(
    score: &ScoreModel,
    closure: &ClosureModel,
    traffic: &TrafficModel,
    rho: f64,
    x: f64,
    t: f64,
) -> f64 {
    let d = score.eval_with_derivatives(rho, x, t);
    let b = closure.drift_jet(&traffic.flux, rho, x, t);
    residual_value(&d, b, traffic.diffusion_jet(rho, x))
}

/// Residual of the numerical score of a stored FPE solution at snapshot `k`,
/// by finite differences on the mesh and across the neighbouring snapshots.
/// Cells whose stencil touches densities below `floor · max p` are `None`.
pub fn grid_residuals(
    grid: &DensityGrid,
    closure: &Closure,
    model: &TrafficModel,
    k: usize,
    floor: f64,
) -> Result<Vec<Option<f64>>> {
    if k == 0 || k + 1 >= grid.times.len() {
        return Err(Error::IndexOutOfRange {
            what: "snapshot with neighbours",
            index: k,
            len: grid.times.len(),
        });
    }
    let n = grid.mesh.n_cells;
    let h = grid.mesh.h;
    let max = grid.p[k].iter().copied().fold(0.0, f64::max);
    let log = |kk: usize| -> Vec<Option<f64>> {
        grid.p[kk]
            .iter()
            .map(|&v| if v > floor * max { Some(math::ln(v)) } else { None })
            .collect()
    };
    let (lm, l0, lp) = (log(k - 1), log(k), log(k + 1));
    let score_at = |l: &[Option<f64>], i: usize| Some((l[i + 1]? - l[i - 1]?) / (2.0 * h));
    let dt = grid.times[k + 1] - grid.times[k - 1];
    let x = grid.x;
    let t = grid.times[k];
    let mut out = alloc::vec![None; n];
    for i in 2..n.saturating_sub(2) {
        let cell = || -> Option<f64> {
            let s = score_at(&l0, i)?;
            let s1 = (l0[i + 1]? - 2.0 * l0[i]? + l0[i - 1]?) / (h * h);
            let s2 = (l0[i + 2]? - 2.0 * l0[i + 1]? + 2.0 * l0[i - 1]? - l0[i - 2]?) / (2.0 * h * h * h);
            let st = (score_at(&lp, i)? - score_at(&lm, i)?) / dt;
            let rho = grid.mesh.center(i);
            let d = ScoreDerivatives {
                s,
                s_rho: s1,
                s_rho2: s2,
                s_t: st,
            };
            Some(residual_value(
                &d,
                closure.drift_jet(model, rho, x, t),
                model.diffusion_jet(rho, x),
            ))
        };
        out[i] = cell();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FluxFunction, InitialProfile, NoiseStructure};
    use crate::net::encoding::Scaling;
    use crate::net::score::Architecture;
    use crate::net::closure::ClosureKind;
    use rand::{Rng, SeedableRng};

    #[test]
    fn partials_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let mut x = [0.0; 11];
            x.iter_mut().for_each(|v| *v = rng.random_range(-2.0..2.0));
            let f = |x: &[f64; 11]| {
                let d = ScoreDerivatives {
                    s: x[0],
                    s_rho: x[1],
                    s_rho2: x[2],
                    s_t: x[3],
                };
                residual_value(&d, [x[4], x[5], x[6]], [x[7], x[8], x[9], x[10]])
            };
            let d = ScoreDerivatives {
                s: x[0],
                s_rho: x[1],
                s_rho2: x[2],
                s_t: x[3],
            };
            let p = residual_partials(&d, [x[4], x[5], x[6]], [x[7], x[8], x[9], x[10]]);
            let analytic: [f64; 11] = [
                p.score[0], p.score[1], p.score[2], p.score[3], p.drift[0], p.drift[1], p.drift[2],
                p.sigma[0], p.sigma[1], p.sigma[2], p.sigma[3],
            ];
            for k in 0..11 {
                let h = 1e-6;
                let mut a = x;
                a[k] += h;
                let mut b = x;
                b[k] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                assert!((fd - analytic[k]).abs() <= 1e-7 * fd.abs().max(1.0), "input {k}");
            }
        }
    }

    fn const_model(c: f64) -> TrafficModel {
        TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::ConstantDiffusion(c),
            1.0,
            1.0,
            InitialProfile::Constant(0.5),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn stationary_uniform_residual_is_zero() {
        let d = ScoreDerivatives::default();
        assert_eq!(residual_value(&d, [0.0; 3], [0.02, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn gaussian_heat_solution_has_zero_residual() {
        let (c, v0, mu) = (0.02, 0.003, 0.5);
        for i in 1..100 {
            let rho = i as f64 / 100.0;
            let t = 0.01 * i as f64;
            let var = v0 + c * t;
            let d = ScoreDerivatives {
                s: -(rho - mu) / var,
                s_rho: -1.0 / var,
                s_rho2: 0.0,
                s_t: (rho - mu) * c / (var * var),
            };
            assert!(residual_value(&d, [0.0; 3], [c, 0.0, 0.0, 0.0]).abs() <= 1e-10);
        }
    }

    #[test]
    fn silent_noise_and_zero_closure_give_zero_velocity() {
        let m = TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::none(),
            1.0,
            1.0,
            InitialProfile::Constant(0.5),
            0.0,
        )
        .unwrap();
        let s = Scaling::from_model(&m);
        let score = ScoreModel::new(Architecture::default(), s, 1.0, 4);
        let closure = ClosureModel::new(ClosureKind::StructuredM, Architecture::default(), s, 1.0, 4);
        assert_eq!(closed_velocity(&score, &closure, &m, 0.3, 0.2, 0.5), [0.0; 3]);
        let _ = const_model(0.0);
    }
}
