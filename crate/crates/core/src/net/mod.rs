//! Score network, closure networks, losses and the training loop.

pub mod adam;
pub mod closure;
pub mod encoding;
pub mod lhs;
pub mod loss;
pub mod mlp;
pub mod residual;
pub mod score;
pub mod train;

pub use closure::{ClosureKind, ClosureModel};
pub use encoding::{encode, Scaling};
pub use lhs::lhs_sample;
pub use loss::{bc_loss, dsm_loss, physics_loss, BoundaryQuadrature, Observation};
pub use residual::{closed_velocity, fpe_residual};
pub use score::{Architecture, ScoreDerivatives, ScoreModel};
pub use train::{learn_noise, train, ObservationKind, ObservationSet, TrainConfig, TrainLog, TrainedModels};
