//! The planar synthon-assembly task: legal actions, reward and data.

mod dataset;
mod reward;
mod rules;

pub use dataset::{components_of, generate_dataset, generate_weighted_dataset, DatasetObject};
pub use reward::{energy, log_reward, log_reward_of_states, reward, RewardParams};
pub use rules::{action_space, Domain, RuleSet, MAX_SEQUENCES};
