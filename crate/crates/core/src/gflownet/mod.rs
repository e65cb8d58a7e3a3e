//! Compositional policy over masked actions, trajectory sampling, the
//! trajectory-balance and cross-entropy objectives, and the trainers.

mod loss;
mod policy;
mod sampler;
mod train;

pub use loss::{ce_batch, ce_examples, ce_loss, tb_loss, tb_loss_value, uniform_baseline, CeExample};
pub use policy::{policy_distribution, Decision, DecisionLogProbs, PolicyModel, KIND, LOG_Z};
pub use sampler::{sample_many, sample_trajectory, PolicyView, Rollouts, Trajectory, TrajectoryStep};
pub use train::{
    ce_eval_examples, ce_nll, train_policy_ce, train_policy_tb, CeMetric, Objective, PolicyHyper, PolicyMetric,
};
