//! Joint score-matching and physics-informed training.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{cosine_lr, Adam};
use super::closure::{ClosureKind, ClosureModel};
use super::encoding::Scaling;
use super::lhs::lhs_with;
use super::loss::{perturb_batch, BoundaryQuadrature, Objective, Observation};
use super::score::{Architecture, ScoreModel};
use crate::math;
use crate::model::{FluxFunction, TrafficModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub score_arch: Architecture,
    pub closure_kind: ClosureKind,
    pub closure_arch: Architecture,
    pub lambda: f64,
    pub lambda_bc: f64,
    /// Strictly decreasing.
    pub dsm_scales: Vec<f64>,
    pub batch_obs: usize,
    pub batch_collocation: usize,
    pub batch_boundary: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Cap on the fine-tune phase at `η/10`.
    pub finetune_epochs: usize,
    pub finetune_tol: f64,
    pub seed: u64,
    /// Zero disables rebalancing.
    pub balance_every: usize,
    /// Multiplies the raw score-network output.
    pub score_output_scale: f64,
    pub closure_output_scale: f64,
    pub divergence_threshold: f64,
    /// Width of the mollified initial delta.
    pub mollifier: f64,
    /// Offset of the flux-surrogate evaluation points from `0` and `ρ_max`.
    pub bc_margin: f64,
    /// Epochs during which learned noise amplitudes stay at their initial
    /// values while the score takes shape.
    pub noise_warmup_epochs: usize,
}

impl TrainConfig {
    pub fn defaults_for(rho_max: f64) -> Self {
        let n = 5;
        let (hi, lo) = (0.1 * rho_max, 0.005 * rho_max);
        let ratio = math::exp(math::ln(lo / hi) / (n - 1) as f64);
        TrainConfig {
            score_arch: Architecture::default(),
            closure_kind: ClosureKind::StructuredM,
            closure_arch: Architecture {
                depth: 2,
                width: 32,
                levels: 4,
            },
            lambda: 1.0,
            lambda_bc: 0.1,
            dsm_scales: (0..n).map(|l| hi * math::powi(ratio, l as i32)).collect(),
            batch_obs: 128,
            batch_collocation: 512,
            batch_boundary: 64,
            learning_rate: 1e-3,
            epochs: 2000,
            finetune_epochs: 200,
            finetune_tol: 1e-6,
            seed: 0,
            balance_every: 50,
            score_output_scale: 10.0 / rho_max,
            closure_output_scale: 1.0,
            divergence_threshold: 1e6,
            mollifier: 0.02 * rho_max,
            bc_margin: 0.01 * rho_max,
            noise_warmup_epochs: 0,
        }
    }

    pub fn dsm_weights(&self) -> Vec<f64> {
        super::loss::dsm_weights(&self.dsm_scales)
    }

    pub fn validate(&self, rho_max: f64) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(self.lambda >= 0.0 && self.lambda_bc >= 0.0) || !self.lambda.is_finite() || !self.lambda_bc.is_finite() {
            return Err(Error::config("loss weights must be non-negative and finite"));
        }
        if self.dsm_scales.is_empty() || !self.dsm_scales.iter().all(|&s| positive(s)) {
            return Err(Error::config("dsm_scales must be non-empty and positive"));
        }
        if self.dsm_scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("dsm_scales must be strictly decreasing"));
        }
        if self.batch_obs == 0 || self.batch_collocation == 0 || self.batch_boundary == 0 {
            return Err(Error::config("batch sizes must be positive"));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("score_output_scale", self.score_output_scale),
            ("closure_output_scale", self.closure_output_scale),
            ("divergence_threshold", self.divergence_threshold),
            ("mollifier", self.mollifier),
            ("bc_margin", self.bc_margin),
        ] {
            if !positive(v) {
                return Err(Error::Config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        if 2.0 * self.bc_margin >= rho_max {
            return Err(Error::config("bc_margin must be below rho_max / 2"));
        }
        if self.score_arch.levels == 0 {
            return Err(Error::config("encoding levels must be at least 1"));
        }
        Ok(())
    }
}

/// Observed quantity in one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationKind {
    Density,
    Speed,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    pub records: Vec<Observation>,
}

impl ObservationSet {
    /// Converts speed records through the inverse of `v(ρ) = f(ρ)/ρ`.
    pub fn from_records(records: &[(f64, f64, ObservationKind, f64)], flux: &FluxFunction) -> Result<Self> {
        let mut out = Vec::with_capacity(records.len());
        for &(x, t, kind, value) in records {
            let rho = match kind {
                ObservationKind::Density => value,
                ObservationKind::Speed => flux.inverse_speed(value)?,
            };
            if !(rho > 0.0 && rho < flux.rho_max()) {
                return Err(Error::Domain {
                    quantity: "observed density",
                    value: rho,
                    lo: 0.0,
                    hi: flux.rho_max(),
                });
            }
            out.push(Observation { x, t, rho });
        }
        Ok(ObservationSet { records: out })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModels {
    pub score: ScoreModel,
    pub closure: ClosureModel,
    /// Noise amplitudes in effect at the end of training.
    pub noise_alphas: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Main,
    FineTune,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub total: f64,
    pub dsm: f64,
    pub physics: f64,
    pub bc_flux: f64,
    pub bc_initial: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

pub fn train(obs: &ObservationSet, traffic: &TrafficModel, config: &TrainConfig) -> Result<(TrainedModels, TrainLog)> {
    run(obs, traffic, config, false)
}

/// Trains with the noise amplitudes as extra parameters `α_k = exp(raw_k)`
/// starting from `init_alphas`. With `frozen` the amplitudes stay at
/// `init_alphas` and the run is identical to [`train`] on the rescaled model.
pub fn learn_noise(
    obs: &ObservationSet,
    traffic: &TrafficModel,
    config: &TrainConfig,
    init_alphas: &[f64],
    frozen: bool,
) -> Result<(TrainedModels, TrainLog)> {
    let start = traffic.with_noise_amplitudes(init_alphas)?;
    run(obs, &start, config, !frozen)
}

struct Batches {
    perturbed: Vec<super::loss::Perturbed>,
    collocation: Vec<[f64; 3]>,
    boundary: Vec<[f64; 2]>,
    initial: Vec<[f64; 3]>,
}

fn draw(
    rng: &mut ChaCha8Rng,
    obs: &ObservationSet,
    traffic: &TrafficModel,
    config: &TrainConfig,
) -> Result<Batches> {
    let rho_max = traffic.rho_max();
    let chosen: Vec<Observation> = (0..config.batch_obs)
        .map(|_| obs.records[rng.random_range(0..obs.len())])
        .collect();
    let perturbed = perturb_batch(&chosen, &config.dsm_scales, rho_max, rng)?;
    let collocation = if config.lambda > 0.0 {
        lhs_with(
            rng,
            config.batch_collocation,
            [(0.0, rho_max), (0.0, traffic.length), (0.0, traffic.horizon)],
        )
    } else {
        Vec::new()
    };
    let mut boundary = Vec::new();
    let mut initial = Vec::new();
    if config.lambda_bc > 0.0 {
        for _ in 0..config.batch_boundary {
            let x = rng.random_range(0.0..traffic.length);
            let t = rng.random_range(0.0..traffic.horizon);
            boundary.push([x, t]);
        }
        for _ in 0..config.batch_boundary {
            let x = rng.random_range(0.0..traffic.length);
            let rho0 = traffic.initial_density(x);
            let u: f64 = rng.random_range(-2.0..2.0);
            let rho_hat = rho0 + config.mollifier * u;
            if rho_hat > 0.0 && rho_hat < rho_max {
                initial.push([x, rho0, rho_hat]);
            }
        }
    }
    Ok(Batches {
        perturbed,
        collocation,
        boundary,
        initial,
    })
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|g| g * g).sum())
}

struct Evaluation {
    total: f64,
    dsm: f64,
    physics: f64,
    bc_flux: f64,
    bc_initial: f64,
    g_sm: Vec<f64>,
    g_pf: Vec<f64>,
    g_bc: Vec<f64>,
}

fn run(obs: &ObservationSet, traffic: &TrafficModel, config: &TrainConfig, learn_alpha: bool) -> Result<(TrainedModels, TrainLog)> {
    let rho_max = traffic.rho_max();
    config.validate(rho_max)?;
    let scaling = Scaling::from_model(traffic);
    let score = ScoreModel::new(config.score_arch, scaling, config.score_output_scale, config.seed);
    let closure = ClosureModel::new(
        config.closure_kind,
        config.closure_arch,
        scaling,
        config.closure_output_scale,
        config.seed ^ 0x9e37_79b9_7f4a_7c15,
    );
    let init_alphas = traffic.noise_amplitudes();
    let (nt, np) = (score.n_params(), closure.n_params());
    let mut params = score.params.clone();
    params.extend_from_slice(&closure.params);
    if learn_alpha {
        params.extend(init_alphas.iter().map(|a| math::ln(*a)));
    }
    let mut log = TrainLog::default();
    let total_epochs = config.epochs + config.finetune_epochs;
    if total_epochs == 0 {
        return Ok((
            TrainedModels {
                score,
                closure,
                noise_alphas: init_alphas,
            },
            log,
        ));
    }
    if obs.is_empty() {
        return Err(Error::InsufficientData("no observations to train on".into()));
    }
    let quad = if config.lambda_bc > 0.0 {
        Some(BoundaryQuadrature::new(rho_max, config.bc_margin, 16, 4)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lambda = config.lambda;
    let mut last_good = params.clone();

    let models = |p: &[f64]| -> Result<TrainedModels> {
        let alphas = if learn_alpha {
            p[nt + np..].iter().map(|r| math::exp(*r)).collect()
        } else {
            init_alphas.clone()
        };
        Ok(TrainedModels {
            score: ScoreModel::from_params(config.score_arch, scaling, config.score_output_scale, p[..nt].to_vec())?,
            closure: ClosureModel::from_params(
                config.closure_kind,
                config.closure_arch,
                scaling,
                config.closure_output_scale,
                p[nt..nt + np].to_vec(),
            )?,
            noise_alphas: alphas,
        })
    };

    let evaluate = |p: &[f64], b: &Batches, lambda: f64| -> Result<Evaluation> {
        let current;
        let tm = if learn_alpha {
            let alphas: Vec<f64> = p[nt + np..].iter().map(|r| math::exp(*r)).collect();
            current = traffic.with_noise_amplitudes(&alphas)?;
            &current
        } else {
            traffic
        };
        let objective = Objective {
            score: &score,
            closure: &closure,
            traffic: tm,
            learn_alpha,
        };
        let n = p.len();
        let mut g_sm = alloc::vec![0.0; n];
        let mut g_pf = alloc::vec![0.0; n];
        let mut g_bc = alloc::vec![0.0; n];
        let dsm = objective.dsm(p, &b.perturbed, Some(&mut g_sm));
        let physics = if config.lambda > 0.0 {
            objective.physics(p, &b.collocation, Some(&mut g_pf))
        } else {
            0.0
        };
        let (bc_flux, bc_initial) = match &quad {
            Some(q) => objective.boundary(p, q, &b.boundary, &b.initial, config.mollifier, Some(&mut g_bc)),
            None => (0.0, 0.0),
        };
        Ok(Evaluation {
            total: dsm + lambda * physics + config.lambda_bc * (bc_flux + bc_initial),
            dsm,
            physics,
            bc_flux,
            bc_initial,
            g_sm,
            g_pf,
            g_bc,
        })
    };

    let mut previous_total = f64::NAN;
    for (phase, epochs, base_lr) in [
        (Phase::Main, config.epochs, config.learning_rate),
        (Phase::FineTune, config.finetune_epochs, config.learning_rate / 10.0),
    ] {
        let mut adam = Adam::new(params.len());
        for epoch in 0..epochs {
            let global = if phase == Phase::Main { epoch } else { config.epochs + epoch };
            let batches = draw(&mut rng, obs, traffic, config)?;
            if phase == Phase::Main
                && config.balance_every > 0
                && epoch > 0
                && epoch % config.balance_every == 0
                && config.lambda > 0.0
            {
                let probe = evaluate(&params, &batches, lambda)?;
                let (n_sm, n_pf) = (norm(&probe.g_sm), norm(&probe.g_pf));
                if n_pf > 0.0 && n_sm.is_finite() && n_pf.is_finite() {
                    lambda = n_sm / n_pf;
                    log::debug!("epoch {global}: lambda rebalanced to {lambda:e}");
                }
            }
            let e = evaluate(&params, &batches, lambda)?;
            if !e.total.is_finite() || e.total > config.divergence_threshold {
                return Err(Error::TrainingDiverged {
                    epoch: global,
                    loss: e.total,
                    last_good: Box::new(models(&last_good)?),
                });
            }
            last_good.copy_from_slice(&params);
            let mut grad: Vec<f64> = (0..params.len())
                .map(|i| e.g_sm[i] + lambda * e.g_pf[i] + config.lambda_bc * e.g_bc[i])
                .collect();
            if learn_alpha && global < config.noise_warmup_epochs {
                grad[nt + np..].iter_mut().for_each(|g| *g = 0.0);
            }
            let lr = cosine_lr(base_lr, epoch, epochs);
            adam.step(&mut params, &grad, lr);
            log.records.push(EpochRecord {
                epoch: global,
                phase,
                total: e.total,
                dsm: e.dsm,
                physics: e.physics,
                bc_flux: e.bc_flux,
                bc_initial: e.bc_initial,
                lambda,
                learning_rate: lr,
                alphas: if learn_alpha {
                    params[nt + np..].iter().map(|r| math::exp(*r)).collect()
                } else {
                    init_alphas.clone()
                },
            });
            if phase == Phase::FineTune && math::abs(e.total - previous_total) < config.finetune_tol {
                break;
            }
            previous_total = e.total;
        }
    }
    Ok((models(&params)?, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialProfile, NoiseMode, NoiseStructure, SpatialBasis};
    use alloc::vec;
    use rand_distr::{Distribution, Normal};

    fn silent() -> TrafficModel {
        TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::ConstantDiffusion(0.02),
            1.0,
            1.0,
            InitialProfile::Constant(0.5),
            0.0,
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        let mut c = TrainConfig::defaults_for(1.0);
        c.score_arch = Architecture {
            depth: 2,
            width: 8,
            levels: 1,
        };
        c.closure_arch = c.score_arch;
        c.batch_obs = 8;
        c.batch_collocation = 8;
        c.batch_boundary = 4;
        c.epochs = 5;
        c.finetune_epochs = 2;
        c
    }

    fn gaussian_obs(n: usize, seed: u64) -> ObservationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.5, 0.05).unwrap();
        ObservationSet {
            records: (0..n)
                .map(|_| Observation {
                    x: 0.5,
                    t: 0.5,
                    rho: d.sample(&mut rng),
                })
                .collect(),
        }
    }

    #[test]
    fn default_scales_and_weights() {
        let c = TrainConfig::defaults_for(1.0);
        assert_eq!(c.dsm_scales.len(), 5);
        assert!((c.dsm_scales[0] - 0.1).abs() < 1e-15 && (c.dsm_scales[4] - 0.005).abs() < 1e-15);
        let w = c.dsm_weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        c.validate(1.0).unwrap();
        let mut bad = c.clone();
        bad.dsm_scales = vec![0.01, 0.05];
        assert!(bad.validate(1.0).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_models() {
        let mut c = small_config();
        c.epochs = 0;
        c.finetune_epochs = 0;
        let (m, log) = train(&ObservationSet::default(), &silent(), &c).unwrap();
        let s = Scaling::from_model(&silent());
        assert_eq!(m.score, ScoreModel::new(c.score_arch, s, c.score_output_scale, c.seed));
        assert!(log.records.is_empty());
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let c = small_config();
        let obs = gaussian_obs(50, 1);
        let (a, la) = train(&obs, &silent(), &c).unwrap();
        let (b, lb) = train(&obs, &silent(), &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn loss_decomposes_exactly() {
        let c = small_config();
        let (_, log) = train(&gaussian_obs(50, 2), &silent(), &c).unwrap();
        for r in &log.records {
            let total = r.dsm + r.lambda * r.physics + c.lambda_bc * (r.bc_flux + r.bc_initial);
            assert!((r.total - total).abs() <= 1e-15 * total.abs());
        }
    }

    #[test]
    fn divergence_carries_last_good_checkpoint() {
        let mut c = small_config();
        c.divergence_threshold = 1e-9;
        let err = train(&gaussian_obs(20, 3), &silent(), &c).unwrap_err();
        match err {
            Error::TrainingDiverged { epoch, last_good, .. } => {
                assert_eq!(epoch, 0);
                assert_eq!(last_good.score.n_params(), ScoreModel::new(c.score_arch, Scaling::from_model(&silent()), 1.0, 0).n_params());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frozen_noise_reduces_to_train() {
        let traffic = TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::Modes(vec![NoiseMode::new(0.2, vec![1.0], SpatialBasis::Constant, 1.0).unwrap()]),
            1.0,
            1.0,
            InitialProfile::Constant(0.5),
            0.0,
        )
        .unwrap();
        let c = small_config();
        let obs = gaussian_obs(30, 4);
        let (a, _) = train(&obs, &traffic, &c).unwrap();
        let (b, _) = learn_noise(&obs, &traffic, &c, &[0.2], true).unwrap();
        assert_eq!(a, b);
        let (free, log) = learn_noise(&obs, &traffic, &c, &[0.05], false).unwrap();
        assert_eq!(free.noise_alphas.len(), 1);
        assert!(free.noise_alphas[0] > 0.0);
        assert_eq!(log.records.last().unwrap().alphas, free.noise_alphas);
    }

    #[test]
    fn warmup_holds_noise_amplitudes() {
        let traffic = TrafficModel::new(
            FluxFunction::greenshields(1.0, 1.0).unwrap(),
            NoiseStructure::Modes(vec![NoiseMode::new(0.2, vec![1.0], SpatialBasis::Constant, 1.0).unwrap()]),
            1.0,
            1.0,
            InitialProfile::Constant(0.5),
            0.0,
        )
        .unwrap();
        let mut c = small_config();
        c.noise_warmup_epochs = 4;
        let (fit, log) = learn_noise(&gaussian_obs(30, 5), &traffic, &c, &[0.05], false).unwrap();
        for r in &log.records {
            if r.epoch < 4 {
                assert!((r.alphas[0] - 0.05).abs() < 1e-15);
            }
        }
        assert!((fit.noise_alphas[0] - 0.05).abs() > 1e-6);
    }

    #[test]
    fn speed_observations_are_inverted() {
        let flux = FluxFunction::greenshields(1.0, 1.0).unwrap();
        let set = ObservationSet::from_records(
            &[(0.1, 0.2, ObservationKind::Speed, 0.6), (0.3, 0.4, ObservationKind::Density, 0.25)],
            &flux,
        )
        .unwrap();
        assert!((set.records[0].rho - 0.4).abs() < 1e-10);
        assert_eq!(set.records[1].rho, 0.25);
        assert!(ObservationSet::from_records(&[(0.0, 0.0, ObservationKind::Density, 1.5)], &flux).is_err());
    }
}
