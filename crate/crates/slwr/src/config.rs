//! JSON model and training configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use slwr_core::model::{FluxFunction, InitialProfile, NoiseMode, NoiseStructure, SpatialBasis, TrafficModel};
use slwr_core::net::{Architecture, ClosureKind, TrainConfig};
use slwr_core::spde::Boundary;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_units")]
    pub units: Units,
    pub flux: FluxSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub domain: DomainSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub viscosity: ViscositySpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Si,
    Normalized,
}

fn default_units() -> Units {
    Units::Normalized
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FluxSpec {
    Greenshields { u_f: f64, rho_max: f64 },
    Drake { u_f: f64, rho_max: f64, drake_k0: f64 },
    TabulatedSmooth { u_f: f64, rho_max: f64, rho: Vec<f64>, flow: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub modes: Vec<ModeSpec>,
    /// Test mode: `Σ² ≡ const`; overrides `modes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_sigma_squared: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub alpha: f64,
    pub s_tilde_coeffs: Vec<f64>,
    pub basis: BasisSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Mode number for `sine`/`cosine`, `[center, width]` for `gaussian_bump`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<BasisParam>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Constant,
    Sine,
    Cosine,
    GaussianBump,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BasisParam {
    Scalar(f64),
    Pair([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub boundary: BoundarySpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    #[default]
    Periodic,
    Dirichlet { left: f64, right: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant { value: f64 },
    Sine { mean: f64, amplitude: f64, #[serde(default = "one")] wavenumber: f64 },
    CustomTable { xs: Vec<f64>, values: Vec<f64> },
    Step { left: f64, right: f64, position: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscositySpec {
    #[serde(default)]
    pub epsilon: f64,
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid model config {}: {e}", path.display())))
    }

    pub fn rho_max(&self) -> f64 {
        match &self.flux {
            FluxSpec::Greenshields { rho_max, .. }
            | FluxSpec::Drake { rho_max, .. }
            | FluxSpec::TabulatedSmooth { rho_max, .. } => *rho_max,
        }
    }

    pub fn boundary(&self) -> Boundary {
        match self.domain.boundary {
            BoundarySpec::Periodic => Boundary::Periodic,
            BoundarySpec::Dirichlet { left, right } => Boundary::Dirichlet { left, right },
        }
    }

    pub fn flux(&self) -> slwr_core::Result<FluxFunction> {
        match &self.flux {
            FluxSpec::Greenshields { u_f, rho_max } => FluxFunction::greenshields(*u_f, *rho_max),
            FluxSpec::Drake { u_f, rho_max, drake_k0 } => FluxFunction::drake(*u_f, *rho_max, *drake_k0),
            FluxSpec::TabulatedSmooth { u_f, rho_max, rho, flow } => FluxFunction::tabulated(*u_f, *rho_max, rho, flow),
        }
    }

    pub fn traffic_model(&self) -> Result<TrafficModel, CliError> {
        let flux = self.flux()?;
        let rho_max = flux.rho_max();
        let noise = match self.noise.constant_sigma_squared {
            Some(c) => NoiseStructure::ConstantDiffusion(c),
            None => NoiseStructure::Modes(
                self.noise
                    .modes
                    .iter()
                    .map(|m| NoiseMode::new(m.alpha, m.s_tilde_coeffs.clone(), m.basis.to_basis()?, rho_max))
                    .collect::<slwr_core::Result<Vec<_>>>()?,
            ),
        };
        let initial = match &self.initial {
            InitialSpec::Constant { value } => InitialProfile::Constant(*value),
            InitialSpec::Sine { mean, amplitude, wavenumber } => InitialProfile::Sine {
                mean: *mean,
                amplitude: *amplitude,
                wavenumber: *wavenumber,
            },
            InitialSpec::CustomTable { xs, values } => InitialProfile::Table {
                xs: xs.clone(),
                values: values.clone(),
            },
            InitialSpec::Step { left, right, position } => InitialProfile::Step {
                left: *left,
                right: *right,
                position: *position,
            },
        };
        Ok(TrafficModel::new(
            flux,
            noise,
            self.domain.length,
            self.domain.horizon,
            initial,
            self.viscosity.epsilon,
        )?)
    }
}

impl BasisSpec {
    fn to_basis(&self) -> slwr_core::Result<SpatialBasis> {
        let bad = |what: &str| slwr_core::Error::Config(format!("basis {:?} needs {what}", self.kind));
        Ok(match (self.kind, &self.param) {
            (BasisKind::Constant, _) => SpatialBasis::Constant,
            (BasisKind::Sine, Some(BasisParam::Scalar(m))) => SpatialBasis::Sine { mode: *m },
            (BasisKind::Cosine, Some(BasisParam::Scalar(m))) => SpatialBasis::Cosine { mode: *m },
            (BasisKind::GaussianBump, Some(BasisParam::Pair([center, width]))) => {
                SpatialBasis::GaussianBump { center: *center, width: *width }
            }
            (BasisKind::GaussianBump, _) => return Err(bad("param = [center, width]")),
            _ => return Err(bad("a scalar mode param")),
        })
    }
}

/// Training configuration file; missing keys fall back to
/// [`TrainConfig::defaults_for`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfigFile {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub levels: Option<usize>,
    pub closure_kind: Option<ClosureKindSpec>,
    pub closure_depth: Option<usize>,
    pub closure_width: Option<usize>,
    pub closure_levels: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_bc: Option<f64>,
    pub dsm_scales: Option<Vec<f64>>,
    pub batch_obs: Option<usize>,
    pub batch_collocation: Option<usize>,
    pub batch_boundary: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub finetune_epochs: Option<usize>,
    pub finetune_tol: Option<f64>,
    pub seed: Option<u64>,
    pub balance_every: Option<usize>,
    pub score_output_scale: Option<f64>,
    pub closure_output_scale: Option<f64>,
    pub divergence_threshold: Option<f64>,
    pub mollifier: Option<f64>,
    pub bc_margin: Option<f64>,
    pub noise_warmup_epochs: Option<usize>,
    /// Initial amplitudes for joint noise learning; absent means fixed noise.
    pub learn_noise_init: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureKindSpec {
    Zero,
    StructuredM,
    MeanFieldNet,
    Direct,
}

impl From<ClosureKindSpec> for ClosureKind {
    fn from(k: ClosureKindSpec) -> Self {
        match k {
            ClosureKindSpec::Zero => ClosureKind::Zero,
            ClosureKindSpec::StructuredM => ClosureKind::StructuredM,
            ClosureKindSpec::MeanFieldNet => ClosureKind::MeanFieldNet,
            ClosureKindSpec::Direct => ClosureKind::Direct,
        }
    }
}

impl TrainConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read train config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid train config {}: {e}", path.display())))
    }

    pub fn resolve(&self, rho_max: f64) -> TrainConfig {
        let mut c = TrainConfig::defaults_for(rho_max);
        let score = c.score_arch;
        c.score_arch = Architecture {
            depth: self.depth.unwrap_or(score.depth),
            width: self.width.unwrap_or(score.width),
            levels: self.levels.unwrap_or(score.levels),
        };
        let closure = c.closure_arch;
        c.closure_arch = Architecture {
            depth: self.closure_depth.unwrap_or(closure.depth),
            width: self.closure_width.unwrap_or(closure.width),
            levels: self.closure_levels.unwrap_or(closure.levels),
        };
        if let Some(k) = self.closure_kind {
            c.closure_kind = k.into();
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        take!(
            lambda,
            lambda_bc,
            dsm_scales,
            batch_obs,
            batch_collocation,
            batch_boundary,
            learning_rate,
            epochs,
            finetune_epochs,
            finetune_tol,
            seed,
            balance_every,
            score_output_scale,
            closure_output_scale,
            divergence_threshold,
            mollifier,
            bc_margin,
            noise_warmup_epochs
        );
        c
    }
}
