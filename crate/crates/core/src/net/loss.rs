//! Denoising score-matching, physics and boundary losses with parameter
//! gradients over the flat layout `[θ | φ | raw α]`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::closure::ClosureModel;
use super::mlp::Tape;
use super::residual::{residual_partials, residual_value};
use super::score::ScoreModel;
use crate::math;
use crate::model::TrafficModel;
use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// One density observation at `(x, t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
}

/// A perturbed observation `ρ̃ = ρ + σ ε` with its regression target `−ε/σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbed {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
    pub target: f64,
    pub weight: f64,
}

/// `w_l = σ_l² / Σ_j σ_j²`.
pub fn dsm_weights(scales: &[f64]) -> Vec<f64> {
    let total: f64 = scales.iter().map(|s| s * s).sum();
    scales.iter().map(|s| s * s / total).collect()
}

/// Perturbs every observation once per scale, redrawing `ε` until
/// `ρ̃ ∈ (0, ρ_max)`. The truncated kernel's log-gradient in `ρ̃` is still
/// `−ε/σ`, so the target is unchanged. The expected rejection rate of each
/// scale is computed from the Gaussian CDF before sampling.
pub fn perturb_batch<R: Rng + ?Sized>(
    obs: &[Observation],
    scales: &[f64],
    rho_max: f64,
    rng: &mut R,
) -> Result<Vec<Perturbed>> {
    for &sigma in scales {
        let accept: f64 = obs
            .iter()
            .map(|o| {
                let phi = |z: f64| 0.5 * (1.0 + math::erf(z / core::f64::consts::SQRT_2));
                phi((rho_max - o.rho) / sigma) - phi(-o.rho / sigma)
            })
            .sum::<f64>()
            / obs.len().max(1) as f64;
        if 1.0 - accept > 0.99 {
            return Err(Error::ScaleTooLarge {
                scale: sigma,
                rate: 1.0 - accept,
            });
        }
    }
    let weights = dsm_weights(scales);
    let mut out = Vec::with_capacity(obs.len() * scales.len());
    let mut attempts = alloc::vec![0usize; scales.len()];
    for o in obs {
        for (l, &sigma) in scales.iter().enumerate() {
            loop {
                attempts[l] += 1;
                let eps: f64 = StandardNormal.sample(rng);
                let rho = o.rho + sigma * eps;
                if rho > 0.0 && rho < rho_max {
                    out.push(Perturbed {
                        x: o.x,
                        t: o.t,
                        rho,
                        target: -eps / sigma,
                        weight: weights[l],
                    });
                    break;
                }
                if attempts[l] > 10_000 * (obs.len() + 1) {
                    let rate = 1.0 - out.len() as f64 / attempts.iter().sum::<usize>() as f64;
                    return Err(Error::ScaleTooLarge { scale: sigma, rate });
                }
            }
        }
    }
    Ok(out)
}

/// Composite Gauss–Legendre machinery for reconstructing `p_θ` inside the
/// boundary-flux loss.
#[derive(Clone, Debug)]
pub struct BoundaryQuadrature {
    pub margin: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `log p̃(node_k) = Σ_l cum[k][l] s(node_l)`, referenced at `ρ̂ = 0`.
    cum: Vec<Vec<f64>>,
    left: (Vec<f64>, Vec<f64>),
    right: (Vec<f64>, Vec<f64>),
}

impl BoundaryQuadrature {
    pub fn new(rho_max: f64, margin: f64, intervals: usize, order: usize) -> Result<Self> {
        if !(margin > 0.0 && 2.0 * margin < rho_max) || intervals == 0 || order == 0 {
            return Err(Error::config("invalid boundary quadrature settings"));
        }
        let gl = GaussLegendre::new(order);
        let q = gl.integration_matrix();
        let width = rho_max / intervals as f64;
        let n = intervals * order;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut cum = alloc::vec![alloc::vec![0.0; n]; n];
        for j in 0..intervals {
            let (xs, ws) = gl.mapped(j as f64 * width, (j + 1) as f64 * width);
            nodes.extend(xs);
            weights.extend(ws);
        }
        for j in 0..intervals {
            for a in 0..order {
                let k = j * order + a;
                for l in 0..j * order {
                    cum[k][l] = weights[l];
                }
                for b in 0..order {
                    cum[k][j * order + b] = 0.5 * width * q[a][b];
                }
            }
        }
        let small = GaussLegendre::new(order);
        Ok(BoundaryQuadrature {
            margin,
            nodes,
            weights,
            cum,
            left: small.mapped(0.0, margin),
            right: small.mapped(rho_max - margin, rho_max),
        })
    }
}

/// Shared evaluator for every loss term and its gradient.
pub(crate) struct Objective<'a> {
    pub score: &'a ScoreModel,
    pub closure: &'a ClosureModel,
    pub traffic: &'a TrafficModel,
    /// Whether `params` carries trailing raw noise amplitudes.
    pub learn_alpha: bool,
}

struct Grads<'g> {
    theta: &'g mut [f64],
    phi: &'g mut [f64],
    alpha_sq: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn n_theta(&self) -> usize {
        self.score.n_params()
    }

    fn n_phi(&self) -> usize {
        self.closure.n_params()
    }

    fn split<'p>(&self, params: &'p [f64]) -> (&'p [f64], &'p [f64]) {
        let (a, rest) = params.split_at(self.n_theta());
        (a, &rest[..self.n_phi()])
    }

    fn grads<'g>(&self, grad: &'g mut [f64]) -> Grads<'g> {
        let nt = self.n_theta();
        let np = self.n_phi();
        let (theta, rest) = grad.split_at_mut(nt);
        let (phi, _) = rest.split_at_mut(np);
        Grads {
            theta,
            phi,
            alpha_sq: alloc::vec![0.0; self.traffic.noise.mode_count()],
        }
    }

    /// Converts accumulated `∂L/∂α²` into `∂L/∂raw` (with `α = e^raw`).
    fn finish(&self, alpha_sq: &[f64], grad: &mut [f64]) {
        if !self.learn_alpha {
            return;
        }
        let off = self.n_theta() + self.n_phi();
        let alphas = self.traffic.noise_amplitudes();
        for (k, a2) in alpha_sq.iter().enumerate() {
            grad[off + k] += a2 * 2.0 * alphas[k] * alphas[k];
        }
    }

    fn add_sigma_bar(&self, g: &mut Grads<'_>, rho: f64, x: f64, bar: [f64; 4]) {
        if !self.learn_alpha {
            return;
        }
        for (k, u) in self.traffic.unit_mode_jets(rho, x).iter().enumerate() {
            g.alpha_sq[k] += (0..4).map(|j| bar[j] * u[j]).sum::<f64>();
        }
    }

    /// `(1/B) Σ w (s_θ(ρ̃) − target)²`.
    pub fn dsm(&self, params: &[f64], batch: &[Perturbed], mut grad: Option<&mut [f64]>) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let (theta, _) = self.split(params);
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut tape = Tape::default();
        for p in batch {
            let want = grad.is_some();
            let s = self
                .score
                .value_with(theta, p.rho, p.x, p.t, if want { Some(&mut tape) } else { None });
            let r = s - p.target;
            loss += p.weight * r * r * inv;
            if let Some(g) = grad.as_deref_mut() {
                let bar = 2.0 * p.weight * r * inv;
                self.score.backward(theta, &tape, [bar, 0.0, 0.0, 0.0], &mut g[..self.n_theta()]);
            }
        }
        loss
    }

    /// Mean squared score-form residual.
    pub fn physics(&self, params: &[f64], points: &[[f64; 3]], grad: Option<&mut [f64]>) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        let (theta, phi) = self.split(params);
        let inv = 1.0 / points.len() as f64;
        let flux = &self.traffic.flux;
        let Some(grad) = grad else {
            return points
                .iter()
                .map(|&[rho, x, t]| {
                    let d = self.score.derivs_with(theta, rho, x, t, None);
                    let b = self.closure.jet_with(phi, flux, rho, x, t, None);
                    let r = residual_value(&d, b, self.traffic.diffusion_jet(rho, x));
                    r * r * inv
                })
                .sum();
        };
        let mut g = self.grads(&mut *grad);
        let mut loss = 0.0;
        let (mut st, mut ct) = (Tape::default(), Tape::default());
        for &[rho, x, t] in points {
            let d = self.score.derivs_with(theta, rho, x, t, Some(&mut st));
            let b = self.closure.jet_with(phi, flux, rho, x, t, Some(&mut ct));
            let sig = self.traffic.diffusion_jet(rho, x);
            let r = residual_value(&d, b, sig);
            loss += r * r * inv;
            let c = 2.0 * r * inv;
            let p = residual_partials(&d, b, sig);
            self.score.backward(theta, &st, p.score.map(|v| c * v), g.theta);
            self.closure.backward(phi, &ct, flux, rho, p.drift.map(|v| c * v), g.phi);
            self.add_sigma_bar(&mut g, rho, x, p.sigma.map(|v| c * v));
        }
        let alpha_sq = core::mem::take(&mut g.alpha_sq);
        self.finish(&alpha_sq, grad);
        loss
    }

    /// Boundary-flux surrogate `(p_θ v)²` at both margins plus the squared
    /// initial log-density mismatch.
    pub fn boundary(
        &self,
        params: &[f64],
        quad: &BoundaryQuadrature,
        boundary: &[[f64; 2]],
        initial: &[[f64; 3]],
        mollifier: f64,
        grad: Option<&mut [f64]>,
    ) -> (f64, f64) {
        let (theta, phi) = self.split(params);
        let flux = &self.traffic.flux;
        let want = grad.is_some();
        let mut local = grad;
        let rho_max = self.traffic.rho_max();
        let n = quad.nodes.len();
        let order = quad.left.0.len();

        let mut flux_loss = 0.0;
        let mut alpha_acc = alloc::vec![0.0; self.traffic.noise.mode_count()];
        if !boundary.is_empty() {
            let inv = 1.0 / boundary.len() as f64;
            for &[x, t] in boundary {
                // Value-only scores at all quadrature and end points.
                let mut pts: Vec<f64> = quad.nodes.clone();
                pts.extend(&quad.left.0);
                pts.extend(&quad.right.0);
                pts.push(quad.margin);
                pts.push(rho_max - quad.margin);
                let mut tapes: Vec<Tape> = Vec::new();
                let s: Vec<f64> = pts
                    .iter()
                    .map(|&r| {
                        if want {
                            let mut tp = Tape::default();
                            let v = self.score.value_with(theta, r, x, t, Some(&mut tp));
                            tapes.push(tp);
                            v
                        } else {
                            self.score.value_with(theta, r, x, t, None)
                        }
                    })
                    .collect();
                let lp: Vec<f64> = (0..n)
                    .map(|k| (0..n).map(|l| quad.cum[k][l] * s[l]).sum())
                    .collect();
                let shift = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = (0..n).map(|k| quad.weights[k] * math::exp(lp[k] - shift)).collect();
                let z: f64 = e.iter().sum();
                let log_z = shift + math::ln(z);
                let full: f64 = (0..n).map(|l| quad.weights[l] * s[l]).sum();
                let i_left: f64 = (0..order).map(|j| quad.left.1[j] * s[n + j]).sum();
                let i_right: f64 = full - (0..order).map(|j| quad.right.1[j] * s[n + order + j]).sum::<f64>();
                let mut bars = alloc::vec![0.0; pts.len()];
                let mut u = alloc::vec![0.0; n];
                if want {
                    for k in 0..n {
                        let pi = e[k] / z;
                        for l in 0..n {
                            u[l] += pi * quad.cum[k][l];
                        }
                    }
                }
                for (side, integral) in [(0usize, i_left), (1usize, i_right)] {
                    let idx = n + 2 * order + side;
                    let rho = pts[idx];
                    let p = math::exp(integral - log_z);
                    let sig = self.traffic.diffusion_jet(rho, x);
                    let mut ct = Tape::default();
                    let b = self.closure.jet_with(phi, flux, rho, x, t, if want { Some(&mut ct) } else { None });
                    let v = b[0] - 0.5 * sig[1] - 0.5 * sig[0] * s[idx];
                    let j = p * v;
                    flux_loss += j * j * inv;
                    if let Some(g) = local.as_deref_mut() {
                        let bar_j = 2.0 * j * inv;
                        let g_int = bar_j * v * p;
                        for l in 0..n {
                            bars[l] -= g_int * u[l];
                        }
                        if side == 0 {
                            for jj in 0..order {
                                bars[n + jj] += g_int * quad.left.1[jj];
                            }
                        } else {
                            for l in 0..n {
                                bars[l] += g_int * quad.weights[l];
                            }
                            for jj in 0..order {
                                bars[n + order + jj] -= g_int * quad.right.1[jj];
                            }
                        }
                        let bar_v = bar_j * p;
                        bars[idx] += bar_v * (-0.5 * sig[0]);
                        let nt = self.n_theta();
                        let np = self.n_phi();
                        self.closure
                            .backward(phi, &ct, flux, rho, [bar_v, 0.0, 0.0], &mut g[nt..nt + np]);
                        if self.learn_alpha {
                            let sbar = [bar_v * (-0.5 * s[idx]), -0.5 * bar_v, 0.0, 0.0];
                            for (k, uj) in self.traffic.unit_mode_jets(rho, x).iter().enumerate() {
                                alpha_acc[k] += (0..4).map(|q| sbar[q] * uj[q]).sum::<f64>();
                            }
                        }
                    }
                }
                if let Some(g) = local.as_deref_mut() {
                    let nt = self.n_theta();
                    for (tp, &bar) in tapes.iter().zip(&bars) {
                        if bar != 0.0 {
                            self.score.backward(theta, tp, [bar, 0.0, 0.0, 0.0], &mut g[..nt]);
                        }
                    }
                }
            }
        }

        let mut init_loss = 0.0;
        if !initial.is_empty() {
            let inv = 1.0 / initial.len() as f64;
            let gl = GaussLegendre::new(8);
            for &[x, rho0, rho_hat] in initial {
                let (nodes, weights) = gl.mapped(rho0, rho_hat);
                let mut tapes = Vec::new();
                let mut integral = 0.0;
                for (&r, &w) in nodes.iter().zip(&weights) {
                    let v = if want {
                        let mut tp = Tape::default();
                        let v = self.score.value_with(theta, r, x, 0.0, Some(&mut tp));
                        tapes.push(tp);
                        v
                    } else {
                        self.score.value_with(theta, r, x, 0.0, None)
                    };
                    integral += w * v;
                }
                let d = rho_hat - rho0;
                let m = integral + d * d / (2.0 * mollifier * mollifier);
                init_loss += m * m * inv;
                if let Some(g) = local.as_deref_mut() {
                    let nt = self.n_theta();
                    for (tp, &w) in tapes.iter().zip(&weights) {
                        self.score.backward(theta, tp, [2.0 * m * inv * w, 0.0, 0.0, 0.0], &mut g[..nt]);
                    }
                }
            }
        }
        if let Some(g) = local {
            self.finish(&alpha_acc, g);
        }
        (flux_loss, init_loss)
    }
}

fn concat(score: &ScoreModel, closure: &ClosureModel) -> Vec<f64> {
    let mut p = score.params.clone();
    p.extend_from_slice(&closure.params);
    p
}

/// Multi-scale denoising score-matching loss over all observations.
pub fn dsm_loss<R: Rng + ?Sized>(
    score: &ScoreModel,
    obs: &[Observation],
    scales: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let batch = perturb_batch(obs, scales, score.scaling.rho_max, rng)?;
    let closure = ClosureModel::zero(score.scaling);
    let traffic_free = Objective {
        score,
        closure: &closure,
        traffic: &placeholder_model(score),
        learn_alpha: false,
    }
    .dsm(&score.params, &batch, None);
    Ok(traffic_free)
}

fn placeholder_model(score: &ScoreModel) -> TrafficModel {
    use crate::model::{FluxFunction, InitialProfile, NoiseStructure};
    let s = score.scaling;
    TrafficModel::new(
        FluxFunction::greenshields(1.0, s.rho_max).expect("positive scaling"),
        NoiseStructure::none(),
        s.length,
        s.horizon,
        InitialProfile::Constant(0.5 * s.rho_max),
        0.0,
    )
    .expect("positive scaling")
}

/// Mean squared residual over collocation points `(ρ̂, x, t)`.
pub fn physics_loss(
    score: &ScoreModel,
    closure: &ClosureModel,
    traffic: &TrafficModel,
    points: &[[f64; 3]],
) -> f64 {
    Objective {
        score,
        closure,
        traffic,
        learn_alpha: false,
    }
    .physics(&concat(score, closure), points, None)
}

/// Boundary loss: flux term over `(x, t)` samples plus initial term over
/// `(x, ρ₀(x), ρ̂)` samples.
pub fn bc_loss(
    score: &ScoreModel,
    closure: &ClosureModel,
    traffic: &TrafficModel,
    quad: &BoundaryQuadrature,
    boundary: &[[f64; 2]],
    initial: &[[f64; 3]],
    mollifier: f64,
) -> (f64, f64) {
    Objective {
        score,
        closure,
        traffic,
        learn_alpha: false,
    }
    .boundary(&concat(score, closure), quad, boundary, initial, mollifier, None)
}
