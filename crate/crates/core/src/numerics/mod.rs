//! Dense matrices, seeded randomness, the two-layer encoder with exact
//! parameter and input gradients, and the finite-difference oracle.
//!
//! All reals are `f64`. Encoder evaluation and gradient computation take
//! `&Encoder` and are safe to run from concurrent workers.

mod encoder;
pub mod gradient;
pub mod head;
mod matrix;
mod rng;

pub use encoder::{Arch, Encoder, FnRepresentation, Projection, Representation};
pub use gradient::{finite_diff, param_gradient, CodeGrad, CodeLoss, Codes, ConstantLoss};
pub use head::{fit_softmax, FitConfig, SoftmaxHead};
pub use matrix::{dot, norm, sq_dist, symmetric_eigen, Matrix};
pub use rng::Rng;
