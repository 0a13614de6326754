//! Perception learning laboratory: a sensory encoder trained only with
//! task-agnostic objectives, a certification suite of representation-level
//! metrics, and numerical checks of the Bayes-risk separation results.
//!
//! The crate is `no_std` and needs only `alloc`. All IO, configuration and
//! report formats live in the companion `pel` crate.
//!
//! Module map:
//! - [`numerics`]: matrices, seeded randomness, the encoder with analytic
//!   gradients, and the finite-difference oracle.
//! - [`worlds`]: synthetic data sources with known group structure.
//! - [`objectives`]: invariance, equivariance, InfoNCE and diversity losses.
//! - [`metrics`]: the certification suite run on frozen encoders.
//! - [`theory`]: Bayes-risk oracles, assumption audits and orthogonality checks.
//! - [`trainer`]: perception training and frozen-code decision heads.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod metrics;
pub mod numerics;
pub mod objectives;
pub mod theory;
pub mod trainer;
pub mod worlds;

pub use error::{Error, Result};
pub use numerics::{Arch, Encoder, Matrix, Representation, Rng};
pub use objectives::ObjectiveSpec;
pub use worlds::{Batch, TransformFamily, ViewBatch, World};
