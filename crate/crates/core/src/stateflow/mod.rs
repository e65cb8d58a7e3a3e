//! Continuous state flow: noisy interpolation for training, the clean-state
//! predictor, its loss and trainer, and the Euler integrator.

mod integrate;
mod interpolate;
mod model;
mod train;

pub use integrate::{advance, euler_rollout, euler_rollout_with, euler_step, euler_step_count, euler_step_with, replay};
pub use interpolate::{interpolate, NoisySample};
pub use model::{LayoutOracle, Predictor, StateFlowModel, ZeroSelfCond, KIND};
pub use train::{
    apply_self_conditioning, sample_batch, state_loss, state_loss_from, train_stateflow, StateFlowHyper,
    StateFlowMetric, RUNNING_DECAY,
};
