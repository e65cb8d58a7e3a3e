//! Small differentiable core: matrices, a gradient tape, parameters with
//! Adam, MLPs, checkpoints and a finite-difference checker.

pub mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;
mod params;
mod tape;

pub use gradcheck::{gradcheck, CoordCheck, GradcheckConfig, GradcheckReport};
pub use matrix::Matrix;
pub use mlp::Mlp;
pub use params::{AdamConfig, Gradients, ParamId, ParamStore, Tensor};
pub use tape::{Tape, Var};

/// Hidden width used by every network in the crate.
pub const HIDDEN: usize = 64;
/// Hidden layers per MLP.
pub const DEPTH: usize = 3;

/// `[input, HIDDEN x DEPTH, output]`.
pub fn mlp_dims(input: usize, output: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend(std::iter::repeat_n(HIDDEN, DEPTH));
    d.push(output);
    d
}
