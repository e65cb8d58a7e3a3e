//! Compositional flow sampling on a planar synthon-assembly toy domain.
//!
//! Objects grow one component at a time under a learned policy while each
//! component's coordinates are transported from noise to a clean layout by
//! a learned state-flow model. The policy is trained with trajectory
//! balance so that finished objects are sampled in proportion to reward,
//! and an exhaustive enumeration oracle gives exact reference
//! distributions for the toy domain.

pub mod cli;
pub mod compstate;
pub mod domain;
pub mod encode;
pub mod gflownet;
pub mod error;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod schedule;
pub mod stateflow;

pub use error::{Error, Result};
