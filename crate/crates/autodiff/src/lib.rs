//! Reverse-mode automatic differentiation for the training code.
//!
//! Model code is written once against the [`Graph`] trait and runs either on
//! plain `f64` values ([`Plain`]) for fast rollouts, or on a [`Tape`] when
//! gradients are needed. Both paths execute the same arithmetic in the same
//! order, so a decision evaluated during simulation is bit-identical to the
//! one seen during training.

mod adam;
mod checkpoint;
mod error;
mod graph;
mod mlp;
mod tape;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use error::AutodiffError;
pub use graph::{Graph, Plain};
pub use mlp::{mlp_apply, Mlp, MlpParams, OutputTransform};
pub use tape::{tape_eval_grad, Gradients, Tape, Var};
